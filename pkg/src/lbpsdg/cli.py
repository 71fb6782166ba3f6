"""Command-line entry point: ``lbpsdg <subcommand>``.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 internal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .classify import DegenerateFoldError
from .evm import EvmParams, magnify
from .experiment import (ConfigError, StageError, SweepAxes, extract_all, load_config,
                         make_synthetic_dataset, run_direction_sweep, run_pipeline,
                         synthetic_config, write_json)
from .features import write_feature_file
from .reports import audit_dims, emit_reports, write_confusion, write_dims_audit
from .tim import TimParams, normalize_length
from .volume import ManifestError, VolumeError, load_volume, read_cache, write_cache

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
log = logging.getLogger("lbpsdg")


def _read_volume(path):
    p = Path(path)
    return load_volume(p) if p.is_dir() else read_cache(p)


def _band(text):
    try:
        lo, hi = (float(s) for s in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"band must look like LO:HI, got {text!r}")
    return lo, hi


def _config(args):
    cfg = load_config(args.config)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    if getattr(args, "output", None):
        cfg = replace(cfg, output_dir=args.output)
    return cfg


def cmd_synth(args):
    out = Path(args.out)
    manifest = make_synthetic_dataset(out, args.subjects, args.videos, args.seed, tuple(args.size), args.kind)
    cfg = synthetic_config("manifest.json", "results", seed=args.seed)
    cfg = replace(cfg, sweep=SweepAxes(directions=tuple(range(1, 19))))
    write_json(out / "config.json", cfg.to_dict())
    print(f"wrote {manifest} and {out / 'config.json'}")


def _apply(func, v, p):
    # parameters are validated already, so a failure here is about the volume
    try:
        return func(v, p)
    except ValueError as exc:
        raise VolumeError(str(exc)) from exc


def cmd_evm(args):
    lo, hi = args.band
    p = EvmParams(args.alpha, args.levels, lo, hi, args.fps, args.amplify_level0)
    write_cache(_apply(magnify, _read_volume(args.input), p), args.output)


def cmd_tim(args):
    p = TimParams(args.frames)
    write_cache(_apply(normalize_length, _read_volume(args.input), p), args.output)


def cmd_extract(args):
    cfg = _config(args)
    manifest, x, _, _, layout = extract_all(cfg)
    out = Path(args.features or Path(cfg.output_dir) / "features.mxf")
    records = [(i, e.subject_id, e.label, cfg.pipeline.descriptor, cfg.hash, row)
               for i, (e, row) in enumerate(zip(manifest.entries, x))]
    write_feature_file(out, records, layout)
    print(f"{len(records)} vectors of dimension {x.shape[1]} -> {out}")


def cmd_eval(args):
    cfg = _config(args)
    report = run_pipeline(cfg)
    write_confusion(report, Path(cfg.output_dir) / f"confusion_{cfg.pipeline.descriptor}.csv")
    print(f"{cfg.pipeline.descriptor}: RR = {report.overall_rr:.4f} over {len(report.folds)} folds")


def cmd_sweep(args):
    cfg = _config(args)
    result = run_direction_sweep(cfg)
    emit_reports(result.cells, cfg.output_dir)
    missing = sum(c.get("status") != "ok" for c in result.cells)
    print(f"{len(result.cells)} cells ({missing} missing); cache hit rate {result.hit_rate:.2%}")


def cmd_report(args):
    src = Path(args.dir) / "sweep_cells.json"
    try:
        cells = json.loads(src.read_text())["cells"]
    except FileNotFoundError as exc:
        raise ConfigError(f"no sweep results at {src}") from exc
    for p in emit_reports(cells, args.out or args.dir):
        print(p)


def cmd_audit(args):
    rows = audit_dims()
    if args.out:
        write_dims_audit(args.out, rows)
    for r in rows:
        flag = "match" if r["match"] else ("MISMATCH" if r["blocking"] else "differs (advisory)")
        print(f"{r['dataset']:9s} {r['descriptor']:8s} dim={r['dim']:6d} expected={r['expected']:6d} {flag}")
    bad = [r for r in rows if r["blocking"] and not r["match"]]
    return EXIT_INTERNAL if bad else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lbpsdg", description="Spatiotemporal LBP/HSDG features and LOSO evaluation.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--workers", type=int, default=None, help="parallel sweep workers (overrides config)")
    ap.add_argument("--log-level", default="WARNING")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic manifest, frames and config")
    p.add_argument("--out", required=True)
    p.add_argument("--subjects", type=int, default=8)
    p.add_argument("--videos", type=int, default=6, help="videos per subject")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, nargs=3, default=(32, 32, 10), metavar=("W", "H", "T"))
    p.add_argument("--kind", default="translate_up")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("evm", help="magnify a volume (cache file or frame directory)")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--band", type=_band, default=(0.4, 8.0), help="LO:HI in Hz")
    p.add_argument("--fps", type=float, default=100.0)
    p.add_argument("--amplify-level0", action="store_true")
    p.set_defaults(func=cmd_evm)

    p = sub.add_parser("tim", help="resample a volume to N frames")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--frames", type=int, required=True)
    p.set_defaults(func=cmd_tim)

    for name, func, helptext in (("extract", cmd_extract, "write per-video feature vectors"),
                                 ("eval", cmd_eval, "LOSO evaluation of one configuration"),
                                 ("sweep-directions", cmd_sweep, "direction / radius / alpha sweep")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True)
        p.add_argument("--output", help="override the config's output directory")
        if name == "extract":
            p.add_argument("--features", help="feature file path")
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="re-emit CSV reports from a sweep directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("audit-dims", help="compare feature dimensions with the reference table")
    p.add_argument("--out")
    p.set_defaults(func=cmd_audit)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = args.func(args)
        return EXIT_OK if rc is None else rc
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StageError, VolumeError, ManifestError, DegenerateFoldError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
