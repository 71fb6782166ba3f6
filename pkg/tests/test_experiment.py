import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from lbpsdg.evm import EvmParams
from lbpsdg.experiment import (CACHE_ENV, ConfigError, ExperimentConfig, Preprocessing, StageError,
                               SweepAxes, extract_all, load_config, run_direction_sweep, run_pipeline,
                               stable_hash, synthetic_config)
from lbpsdg.reports import CHART_HEADER, SUMMARY_HEADER, audit_dims, emit_reports
from lbpsdg.tim import TimParams
from lbpsdg.volume import load_manifest


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_synthetic_manifest(small_dataset):
    m = load_manifest(small_dataset, check_paths=True)
    assert len(m) == 16 and m.subjects == ["s01", "s02", "s03", "s04"]
    assert m.labels == ["off_speed", "unit_speed"]


def test_pipeline_runs_all_folds(small_dataset, tmp_path):
    cfg = synthetic_config(small_dataset, tmp_path / "out")
    rep = run_pipeline(cfg)
    assert len(rep.folds) == 4 and rep.confusion.sum() == 16
    saved = json.loads((tmp_path / "out" / "report.json").read_text())
    assert saved["overall_rr"] == rep.overall_rr and saved["config_hash"] == cfg.hash


def test_pipeline_deterministic(small_dataset, tmp_path):
    cfg = synthetic_config(small_dataset, tmp_path / "a")
    run_pipeline(cfg)
    run_pipeline(replace(cfg, output_dir=str(tmp_path / "b")))
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_volume_cache_reused(small_dataset, tmp_path):
    cfg = synthetic_config(small_dataset, tmp_path / "o")
    cfg = replace(cfg, preprocessing=Preprocessing(tim=TimParams(8), evm=EvmParams(alpha=5, pyramid_levels=2)))
    _, x1, *_ = extract_all(cfg)
    cached = list((tmp_path / "o" / "cache").glob("*.mxv"))
    assert len(cached) == 16
    _, x2, *_ = extract_all(cfg)
    assert np.array_equal(x1, x2)


def test_cache_env_override(small_dataset, tmp_path, monkeypatch):
    monkeypatch.setenv(CACHE_ENV, str(tmp_path / "shared"))
    extract_all(synthetic_config(small_dataset, tmp_path / "o"))
    assert len(list((tmp_path / "shared").glob("*.mxv"))) == 16


def test_config_round_trip_and_hash(tmp_path):
    cfg = synthetic_config(str(tmp_path / "m.json"), "out", direction=4)
    cfg = replace(cfg, sweep=SweepAxes(directions=(1, 17), r_v=(1, 2), alphas=(8.0,)))
    (tmp_path / "c.json").write_text(json.dumps(cfg.to_dict()))
    back = load_config(tmp_path / "c.json")
    assert back.pipeline == cfg.pipeline and back.sweep == cfg.sweep and back.kernel == cfg.kernel
    assert back.hash == cfg.hash
    assert replace(cfg, workers=8, output_dir="x").hash == cfg.hash
    assert replace(cfg, seed=1).hash != cfg.hash
    assert stable_hash({"a": 1, "b": 2}) == stable_hash({"b": 2, "a": 1})


def test_normalize_auto_follows_kernel():
    base = {"manifest": "m.json", "pipeline": {"descriptor": "lbp_top"}}
    assert ExperimentConfig.from_dict(base).pipeline.normalize == "none"
    chi = dict(base, kernel={"kind": "chi_square"})
    assert ExperimentConfig.from_dict(chi).pipeline.normalize == "per_block_l1"


@pytest.mark.parametrize("text,match", [
    ("{", "line 1"),
    ('{"manifest": "m"}', "pipeline"),
    ('{"manifest": "m", "pipeline": {"descriptor": "nope"}}', "descriptor"),
    ('{"manifest": "m", "pipeline": {}, "kernel": {"kind": "rbf"}}', "kernel"),
])
def test_config_errors(tmp_path, text, match):
    (tmp_path / "c.json").write_text(text)
    with pytest.raises(ConfigError, match=match):
        load_config(tmp_path / "c.json")


def test_stage_error_names_video(small_dataset, tmp_path):
    cfg = synthetic_config(small_dataset, tmp_path / "o")
    # 3 frames leave a single valid t center, too few for two temporal blocks
    cfg = replace(cfg, preprocessing=Preprocessing(tim=TimParams(3)))
    cfg = replace(cfg, pipeline=replace(cfg.pipeline, grid=replace(cfg.pipeline.grid, bt=2)))
    with pytest.raises(StageError, match="videos/s01_v01"):
        extract_all(cfg)


def _sweep_cfg(manifest, out, **axes):
    cfg = synthetic_config(manifest, out)
    return replace(cfg, sweep=SweepAxes(**axes))


def test_sweep_resumes_from_cells(small_dataset, tmp_path):
    cfg = _sweep_cfg(small_dataset, tmp_path / "o", directions=(4, 17), r_v=(1, 2))
    first = run_direction_sweep(cfg)
    assert len(first.cells) == 2 * 3 and first.computed == 6 and first.cache_hits == 0
    again = run_direction_sweep(cfg)
    assert again.hit_rate == 1.0
    assert again.cells == first.cells
    # adding a direction only computes the new cells
    more = run_direction_sweep(replace(cfg, sweep=replace(cfg.sweep, directions=(4, 17, 15))))
    assert more.computed == 2 and more.cache_hits == 6


def test_sweep_parallel_matches_serial(small_dataset, tmp_path):
    serial = run_direction_sweep(_sweep_cfg(small_dataset, tmp_path / "s", directions=(17,), r=(1, 2)))
    par = run_direction_sweep(replace(_sweep_cfg(small_dataset, tmp_path / "p", directions=(17,), r=(1, 2)),
                                      workers=2))
    assert serial.cells == par.cells


def test_sweep_records_missing_cells(small_dataset, tmp_path):
    # r = 5 leaves no valid centers along t in 10 frames; margins are shared, so the
    # whole group is missing while the r = 1 group is unaffected
    cfg = _sweep_cfg(small_dataset, tmp_path / "o", directions=(1,), r=(1, 5))
    res = run_direction_sweep(cfg)
    statuses = {(c["r"], c["direction"]): c["status"] for c in res.cells}
    assert statuses == {(1, None): "ok", (1, 1): "ok", (5, None): "missing", (5, 1): "missing"}
    assert "valid centers" in res.cells[-1]["error"]
    emit_reports(res.cells, tmp_path / "o")
    rows = read_csv(tmp_path / "o" / "sweep_cells.csv")
    assert [r[-1] for r in rows[1:]] == ["ok", "ok", "missing", "missing"]


def fake_cells(alphas, directions):
    cells = []
    for a in alphas:
        cells.append({"alpha": a, "r_v": 1, "r": 1, "direction": None, "descriptor": "lbp_top", "status": "ok",
                      "dim": 10, "rr": 0.5, "classes": ["x", "y"], "confusion": [[1, 1], [0, 2]]})
        for d in directions:
            cells.append({"alpha": a, "r_v": 1, "r": 1, "direction": d, "descriptor": "lbp_sdg", "status": "ok",
                          "dx": 0, "dy": 0, "dt": 1, "dim": 12, "rr": 0.5 + d / 100,
                          "classes": ["x", "y"], "confusion": [[2, 0], [0, 2]]})
    return cells


def test_reports_shape(tmp_path):
    cells = fake_cells([8.0, 9.0, 10.0, 11.0, 12.0], range(1, 19))
    emit_reports(cells, tmp_path)
    chart = read_csv(tmp_path / "chart_data.csv")
    assert chart[0] == CHART_HEADER and len(chart) == 1 + 90
    table = read_csv(tmp_path / "sweep_table.csv")
    assert table[0] == SUMMARY_HEADER and len(table) == 1 + 5 * 19
    row = table[2]
    assert row[1] == "1" and float(row[9]) == pytest.approx(0.01)
    assert (tmp_path / "confusion_lbp_sdg_alpha-8.csv").exists()
    assert (tmp_path / "confusion_lbp_top_alpha-12.csv").exists()


def test_reports_byte_stable(tmp_path):
    cells = fake_cells([None], [3, 17])
    emit_reports(cells, tmp_path / "a")
    emit_reports(list(reversed(cells)), tmp_path / "b")
    for name in ("sweep_table.csv", "chart_data.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_empty_results_raise(tmp_path):
    with pytest.raises(ValueError, match="no sweep results"):
        emit_reports([], tmp_path)


def test_audit_blocking_rows_match():
    rows = audit_dims()
    assert len(rows) == 10
    assert all(r["match"] for r in rows if r["blocking"])
    assert all(r["dim"] == r["formula"] for r in rows)
