"""Experiment configuration, end-to-end pipelines and direction sweeps."""
from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .classify import EvalReport, KernelSpec, loso_evaluate
from .evm import EvmParams, magnify
from .features import BlockGrid, PipelineConfig, _atomic_write, extract
from .hsdg import N_DIRECTIONS, HsdgParams
from .lbp import LbpTopParams
from .tim import TimParams, normalize_length
from .volume import (DatasetManifest, ManifestEntry, VideoVolume, dump_manifest, list_frames,
                     load_manifest, load_volume, read_cache, save_frames, synth_motion_volume,
                     write_cache)

log = logging.getLogger(__name__)

CACHE_ENV = "LBPSDG_CACHE_DIR"
R_V_FIELDS = ("r_xv", "r_yv", "r_tv")
R_FIELDS = ("r_x", "r_y", "r_t")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class StageError(RuntimeError):
    """A pipeline stage failed for one video."""

    def __init__(self, video, stage, cause):
        super().__init__(f"{stage} failed for video '{video}': {cause}")
        self.video, self.stage, self.cause = video, stage, cause


def stable_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Preprocessing:
    resize: tuple | None = None
    tim: TimParams | None = None
    evm: EvmParams | None = None

    def to_dict(self):
        return {
            "resize": list(self.resize) if self.resize else None,
            "tim": asdict(self.tim) if self.tim else None,
            "evm": asdict(self.evm) if self.evm else None,
        }

    @classmethod
    def from_dict(cls, d):
        d = d or {}
        resize = d.get("resize")
        return cls(
            resize=tuple(int(s) for s in resize) if resize else None,
            tim=TimParams(**d["tim"]) if d.get("tim") else None,
            evm=EvmParams(**d["evm"]) if d.get("evm") else None,
        )


@dataclass(frozen=True)
class SweepAxes:
    directions: tuple = tuple(range(1, N_DIRECTIONS + 1))
    r_v: tuple = ()
    r: tuple = ()
    alphas: tuple = ()
    r_v_fields: tuple = R_V_FIELDS
    r_fields: tuple = R_FIELDS

    def __post_init__(self):
        for d in self.directions:
            if not 1 <= int(d) <= N_DIRECTIONS:
                raise ConfigError(f"sweep direction {d} outside 1..18")
        if not set(self.r_v_fields) <= set(R_V_FIELDS):
            raise ConfigError(f"r_v_fields must be drawn from {R_V_FIELDS}")
        if not set(self.r_fields) <= set(R_FIELDS):
            raise ConfigError(f"r_fields must be drawn from {R_FIELDS}")

    @classmethod
    def from_dict(cls, d):
        d = d or {}
        kw = {k: tuple(d[k]) for k in ("directions", "r_v", "r", "alphas", "r_v_fields", "r_fields") if k in d}
        return cls(**kw)


@dataclass(frozen=True)
class ExperimentConfig:
    manifest: str
    pipeline: PipelineConfig
    kernel: KernelSpec = field(default_factory=KernelSpec)
    preprocessing: Preprocessing = field(default_factory=Preprocessing)
    sweep: SweepAxes = field(default_factory=SweepAxes)
    output_dir: str = "out"
    workers: int = 1
    seed: int = 0
    skip_degenerate_folds: bool = False

    def to_dict(self) -> dict:
        return {
            "manifest": self.manifest,
            "preprocessing": self.preprocessing.to_dict(),
            "pipeline": self.pipeline.to_dict(),
            "kernel": asdict(self.kernel),
            "sweep": {k: list(v) for k, v in asdict(self.sweep).items()},
            "output_dir": self.output_dir,
            "workers": self.workers,
            "seed": self.seed,
            "skip_degenerate_folds": self.skip_degenerate_folds,
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "ExperimentConfig":
        """Build a config; ``normalize: "auto"`` resolves from the kernel kind."""
        try:
            if "manifest" not in d or "pipeline" not in d:
                raise ConfigError("config needs 'manifest' and 'pipeline' sections")
            kernel = KernelSpec(**d.get("kernel", {}))
            pipe = dict(d["pipeline"])
            if pipe.get("normalize", "auto") == "auto":
                pipe["normalize"] = "per_block_l1" if kernel.kind == "chi_square" else "none"
            manifest = str(d["manifest"])
            out = str(d.get("output_dir", "out"))
            if base_dir is not None:
                manifest = str(Path(base_dir) / manifest) if not Path(manifest).is_absolute() else manifest
                out = str(Path(base_dir) / out) if not Path(out).is_absolute() else out
            return cls(
                manifest=manifest,
                pipeline=PipelineConfig.from_dict(pipe),
                kernel=kernel,
                preprocessing=Preprocessing.from_dict(d.get("preprocessing")),
                sweep=SweepAxes.from_dict(d.get("sweep")),
                output_dir=out,
                workers=int(d.get("workers", 1)),
                seed=int(d.get("seed", 0)),
                skip_degenerate_folds=bool(d.get("skip_degenerate_folds", False)),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @property
    def hash(self) -> str:
        d = self.to_dict()
        for volatile in ("output_dir", "workers"):
            d.pop(volatile)
        return stable_hash(d)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_dict(raw, base_dir=path.parent)


def write_json(path, obj) -> None:
    _atomic_write(Path(path), (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def cache_dir(cfg: ExperimentConfig) -> Path:
    d = Path(os.environ.get(CACHE_ENV) or Path(cfg.output_dir) / "cache")
    d.mkdir(parents=True, exist_ok=True)
    return d


# -- preprocessing ------------------------------------------------------------------

def source_digest(frame_dir) -> str:
    h = hashlib.sha256()
    for p in list_frames(frame_dir):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


def preprocess(v: VideoVolume, pre: Preprocessing, frame_rate: float | None = None) -> VideoVolume:
    """resize -> TIM -> EVM, each stage optional."""
    from .volume import resize_volume

    if pre.resize:
        v = resize_volume(v, pre.resize)
    if pre.tim:
        v = normalize_length(v, pre.tim)
    if pre.evm:
        p = pre.evm if frame_rate is None else replace(pre.evm, frame_rate=frame_rate)
        v = magnify(v, p)
    return v


class VolumeStore:
    """Loads and preprocesses manifest videos, caching results by content hash."""

    def __init__(self, manifest: DatasetManifest, cache: Path | None):
        self.manifest = manifest
        self.cache = cache
        self.hits = 0
        self.misses = 0
        self._digests = {}

    def digest(self, entry: ManifestEntry) -> str:
        if entry.video_path not in self._digests:
            self._digests[entry.video_path] = source_digest(self.manifest.resolve(entry))
        return self._digests[entry.video_path]

    def get(self, entry: ManifestEntry, pre: Preprocessing) -> VideoVolume:
        stage = "load"
        try:
            key = stable_hash({"src": self.digest(entry), "pre": pre.to_dict(), "fps": entry.frame_rate})
            path = self.cache / f"{key}.mxv" if self.cache else None
            if path is not None and path.exists():
                self.hits += 1
                return read_cache(path)
            self.misses += 1
            v = load_volume(self.manifest.resolve(entry))
            stage = "preprocess"
            v = preprocess(v, pre, entry.frame_rate)
            if path is not None:
                write_cache(v, path)
            return v
        except Exception as exc:
            raise StageError(entry.video_path, stage, exc) from exc


# -- single pipeline ---------------------------------------------------------------

def extract_all(cfg: ExperimentConfig, store: VolumeStore | None = None, pipeline: PipelineConfig | None = None):
    """Feature matrix, labels, subjects for every manifest entry."""
    manifest = load_manifest(cfg.manifest, check_paths=True)
    store = store or VolumeStore(manifest, cache_dir(cfg))
    pipeline = pipeline or cfg.pipeline
    feats, layout = [], None
    for e in manifest.entries:
        v = store.get(e, cfg.preprocessing)
        try:
            fv = extract(v, pipeline)
        except Exception as exc:
            raise StageError(e.video_path, "extract", exc) from exc
        feats.append(fv.values)
        layout = fv.layout
    labels = [e.label for e in manifest.entries]
    subjects = [e.subject_id for e in manifest.entries]
    return manifest, np.array(feats), labels, subjects, layout


def run_pipeline(cfg: ExperimentConfig) -> EvalReport:
    """Load, preprocess, extract and LOSO-evaluate; writes ``report.json``."""
    manifest, x, labels, subjects, _ = extract_all(cfg)
    report = loso_evaluate(x, labels, subjects, cfg.kernel, cfg.skip_degenerate_folds)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "effective_config.json", cfg.to_dict())
    write_json(out / "report.json", {"config_hash": cfg.hash, "descriptor": cfg.pipeline.descriptor,
                                     **report.to_dict()})
    return report


# -- direction sweep ----------------------------------------------------------------

def _with_radii(cfg: ExperimentConfig, r_v, r) -> PipelineConfig:
    lbp = cfg.pipeline.lbp
    if r_v is not None:
        lbp = replace(lbp, **{f: int(r_v) for f in cfg.sweep.r_v_fields})
    hs = cfg.pipeline.hsdg or HsdgParams()
    if r is not None:
        hs = replace(hs, **{f: int(r) for f in cfg.sweep.r_fields})
    return replace(cfg.pipeline, lbp=lbp, hsdg=hs)


def baseline_descriptor(descriptor: str) -> str:
    return "lbp_sip" if descriptor in ("lbp_sip", "sip_sdg") else "lbp_top"


def combined_descriptor(descriptor: str) -> str:
    return "sip_sdg" if descriptor in ("lbp_sip", "sip_sdg") else "lbp_sdg"


@dataclass(frozen=True)
class SweepGroup:
    alpha: float | None
    r_v: int | None
    r: int | None


def sweep_groups(cfg: ExperimentConfig) -> list[SweepGroup]:
    alphas = list(cfg.sweep.alphas) or [cfg.preprocessing.evm.alpha if cfg.preprocessing.evm else None]
    r_vs = list(cfg.sweep.r_v) or [None]
    rs = list(cfg.sweep.r) or [None]
    return [SweepGroup(a, rv, r) for a in alphas for rv in r_vs for r in rs]


def _group_pre(cfg: ExperimentConfig, g: SweepGroup) -> Preprocessing:
    if g.alpha is None:
        return cfg.preprocessing
    evm = cfg.preprocessing.evm or EvmParams()
    return replace(cfg.preprocessing, evm=replace(evm, alpha=float(g.alpha)))


def _cell_key(cfg, manifest_digest, pre, pipe, direction):
    return stable_hash({
        "manifest": manifest_digest, "pre": pre.to_dict(), "pipeline": pipe.to_dict(),
        "kernel": asdict(cfg.kernel), "direction": direction,
        "skip": cfg.skip_degenerate_folds,
    })


def _manifest_digest(manifest: DatasetManifest, store: VolumeStore) -> str:
    return stable_hash([[store.digest(e), e.subject_id, e.label, e.frame_rate] for e in manifest.entries])


def _run_group(cfg: ExperimentConfig, g: SweepGroup) -> tuple[list[dict], int, int]:
    """Evaluate the baseline and every direction of one (alpha, r_v, r) group.

    Returns ``(cells, cache_hits, computed)``; finished cells are persisted
    individually so an interrupted sweep resumes where it stopped.
    """
    manifest = load_manifest(cfg.manifest, check_paths=True)
    store = VolumeStore(manifest, cache_dir(cfg))
    mdig = _manifest_digest(manifest, store)
    pre = _group_pre(cfg, g)
    base_pipe = _with_radii(cfg, g.r_v, g.r)
    top_desc = baseline_descriptor(cfg.pipeline.descriptor)
    cells_dir = Path(cfg.output_dir) / "cells"
    cells_dir.mkdir(parents=True, exist_ok=True)

    jobs = [(None, replace(base_pipe, descriptor=top_desc))]
    for d in cfg.sweep.directions:
        pipe = replace(base_pipe, descriptor=combined_descriptor(cfg.pipeline.descriptor),
                       hsdg=replace(base_pipe.hsdg, direction=int(d)))
        jobs.append((int(d), pipe))

    labels = [e.label for e in manifest.entries]
    subjects = [e.subject_id for e in manifest.entries]
    vols = None
    top_feats = None
    cells, hits, computed = [], 0, 0
    for direction, pipe in jobs:
        key = _cell_key(cfg, mdig, pre, pipe, direction)
        path = cells_dir / f"{key}.json"
        if path.exists():
            cells.append(json.loads(path.read_text()))
            hits += 1
            continue
        computed += 1
        cell = {"alpha": g.alpha, "r_v": g.r_v, "r": g.r, "direction": direction,
                "descriptor": pipe.descriptor, "key": key}
        if direction is not None:
            off = pipe.hsdg.offset
            cell.update(dx=off.dx, dy=off.dy, dt=off.dt)
        try:
            if vols is None:
                vols = [store.get(e, pre) for e in manifest.entries]
            if top_feats is None:
                top_feats = [extract(v, replace(base_pipe, descriptor=top_desc)).values for v in vols]
            if direction is None:
                x = np.array(top_feats)
            else:
                hs_pipe = replace(pipe, descriptor="hsdg")
                x = np.array([np.concatenate([t, extract(v, hs_pipe).values])
                              for t, v in zip(top_feats, vols)])
            rep = loso_evaluate(x, labels, subjects, cfg.kernel, cfg.skip_degenerate_folds)
            cell.update(status="ok", dim=int(x.shape[1]), rr=rep.overall_rr, macro_rr=rep.macro_fold_rr,
                        classes=rep.classes, confusion=rep.confusion.tolist(),
                        folds=len(rep.folds))
        except Exception as exc:
            log.warning("sweep cell %s failed: %s", key, exc)
            cell.update(status="missing", error=f"{type(exc).__name__}: {exc}")
        write_json(path, cell)
        cells.append(cell)
    return cells, hits, computed


@dataclass
class SweepResult:
    cells: list
    cache_hits: int = 0
    computed: int = 0

    @property
    def hit_rate(self) -> float:
        total = self.cache_hits + self.computed
        return self.cache_hits / total if total else 0.0


def run_direction_sweep(cfg: ExperimentConfig) -> SweepResult:
    """Every (alpha, r_v, r) group: one baseline cell plus one cell per direction."""
    if not cfg.sweep.directions:
        raise ConfigError("sweep needs at least one direction")
    groups = sweep_groups(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "effective_config.json", cfg.to_dict())
    if cfg.workers > 1 and len(groups) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_run_group, [cfg] * len(groups), groups))
    else:
        parts = [_run_group(cfg, g) for g in groups]
    result = SweepResult([], 0, 0)
    for cells, hits, computed in parts:
        result.cells.extend(cells)
        result.cache_hits += hits
        result.computed += computed
    for c in result.cells:
        c.pop("key", None)
    write_json(out / "sweep_cells.json", {"config_hash": cfg.hash, "cells": result.cells})
    return result


# -- synthetic datasets ----------------------------------------------------------------

SYNTH_CLASSES = ("unit_speed", "off_speed")
OFF_SPEEDS = (0.6, 0.8, 1.2, 1.4)


def make_synthetic_dataset(out_dir, subjects: int = 8, videos_per_subject: int = 6, seed: int = 0,
                           size=(32, 32, 10), kind: str = "translate_up") -> Path:
    """Two-class motion dataset written as PGM frame directories plus ``manifest.json``.

    Every video translates a band-limited texture in direction ``kind``.
    Class ``unit_speed`` moves exactly 1 pixel per frame; ``off_speed``
    moves at one of 0.6/0.8/1.2/1.4 pixels per frame. Classes alternate
    within a subject, and each subject has its own texture bandwidth.
    """
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    entries = []
    for s in range(subjects):
        sid = f"s{s + 1:02d}"
        cutoff = float(rng.uniform(0.08, 0.2))
        for k in range(videos_per_subject):
            label = SYNTH_CLASSES[k % 2]
            speed = 1.0 if label == "unit_speed" else float(rng.choice(OFF_SPEEDS))
            tex_seed = int(rng.integers(0, 2 ** 31))
            v = synth_motion_volume(kind, size, tex_seed, speed, cutoff)
            rel = f"videos/{sid}_v{k + 1:02d}"
            save_frames(v, out_dir / rel)
            entries.append(ManifestEntry(rel, sid, label, 100.0))
    path = out_dir / "manifest.json"
    _atomic_write(path, dump_manifest(DatasetManifest(tuple(entries))).encode())
    return path


def synthetic_config(manifest_path, output_dir, descriptor: str = "lbp_sdg", direction: int = 17,
                     workers: int = 1, seed: int = 0) -> ExperimentConfig:
    """Desk-scale configuration matched to :func:`make_synthetic_dataset`."""
    return ExperimentConfig(
        manifest=str(manifest_path),
        pipeline=PipelineConfig(BlockGrid(2, 2, 1), LbpTopParams(1, 1, 1, 4, 4, 4, False),
                                HsdgParams(direction, 1, 1, 1, 2), descriptor, "per_block_l1"),
        kernel=KernelSpec("linear"),
        output_dir=str(output_dir),
        workers=workers,
        seed=seed,
    )
