"""CSV report emission for sweeps, confusion matrices, chart data and dimension audits."""
from __future__ import annotations

import csv
import io
from pathlib import Path

from .features import BlockGrid, PipelineConfig, _atomic_write, extract, feature_dimension
from .hsdg import HsdgParams
from .lbp import LbpTopParams
from .volume import synth_motion_volume


def _fmt(x):
    if x is None or x == "":
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def _csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue().encode()


def _ok(cells):
    return [c for c in cells if c.get("status") == "ok"]


def _alpha_key(a):
    return (a is not None, a if a is not None else 0)


def _alpha_tag(a):
    return "none" if a is None else _fmt(float(a)).rstrip("0").rstrip(".")


def _baselines(cells) -> dict:
    return {(c["alpha"], c["r_v"], c["r"]): c for c in _ok(cells) if c["direction"] is None}


def cell_rows(cells) -> list:
    base = _baselines(cells)
    rows = []
    for c in cells:
        rel = ""
        b = base.get((c["alpha"], c["r_v"], c["r"]))
        if c.get("status") == "ok" and c["direction"] is not None and b is not None:
            rel = c["rr"] - b["rr"]
        rows.append([c["alpha"], c["r_v"], c["r"],
                     "baseline" if c["direction"] is None else c["direction"],
                     c.get("dx", ""), c.get("dy", ""), c.get("dt", ""), c["descriptor"],
                     c.get("dim", ""), c.get("rr", ""), rel, c.get("status", "")])
    return rows


def summary_rows(cells) -> list:
    """Per alpha: best baseline row, then per direction the best cell over radii.

    Ties keep the first cell in sweep order (smallest r_v, then r).
    ``relative_rr`` compares the winning cell with the baseline of its own
    (alpha, r_v, r) group.
    """
    base = _baselines(cells)
    alphas = sorted({c["alpha"] for c in cells}, key=_alpha_key)
    directions = sorted({c["direction"] for c in cells if c["direction"] is not None})
    rows = []
    for a in alphas:
        group = [c for c in _ok(cells) if c["alpha"] == a]
        bl = [c for c in group if c["direction"] is None]
        best = max(bl, key=lambda c: c["rr"]) if bl else None
        rows.append([a, "baseline", "", "", "", best["descriptor"] if best else "",
                     best["rr"] if best else "", best["r_v"] if best else "",
                     best["r"] if best else "", 0.0 if best else ""])
        for d in directions:
            dc = [c for c in group if c["direction"] == d]
            any_cell = next((c for c in cells if c["direction"] == d), {})
            if not dc:
                rows.append([a, d, any_cell.get("dx", ""), any_cell.get("dy", ""), any_cell.get("dt", ""),
                             any_cell.get("descriptor", ""), "", "", "", ""])
                continue
            w = max(dc, key=lambda c: c["rr"])
            b = base.get((w["alpha"], w["r_v"], w["r"]))
            rel = w["rr"] - b["rr"] if b else ""
            rows.append([a, d, w["dx"], w["dy"], w["dt"], w["descriptor"], w["rr"], w["r_v"], w["r"], rel])
    return rows


SUMMARY_HEADER = ["alpha", "direction", "dx", "dy", "dt", "descriptor", "best_rr", "best_r_v", "best_r",
                  "relative_rr"]
CELL_HEADER = ["alpha", "r_v", "r", "direction", "dx", "dy", "dt", "descriptor", "dim", "rr",
               "relative_rr", "status"]
CHART_HEADER = ["alpha", "direction", "rr", "relative_rr"]


def chart_rows(cells) -> list:
    return [[r[0], r[1], r[6], r[9]] for r in summary_rows(cells) if r[1] != "baseline"]


def confusion_bytes(classes, confusion) -> bytes:
    return _csv_bytes(["true\\pred"] + list(classes), [[c] + list(row) for c, row in zip(classes, confusion)])


def emit_reports(cells, out_dir) -> list[Path]:
    """Write sweep, summary, chart-data and confusion CSVs; returns written paths.

    Axis note: y grows downward, so ``dy < 0`` points up in the image.
    """
    if not cells:
        raise ValueError("no sweep results to report")
    out = Path(out_dir)
    files = {
        "sweep_cells.csv": _csv_bytes(CELL_HEADER, cell_rows(cells)),
        "sweep_table.csv": _csv_bytes(SUMMARY_HEADER, summary_rows(cells)),
        "chart_data.csv": _csv_bytes(CHART_HEADER, chart_rows(cells)),
    }
    ok = _ok(cells)
    for a in sorted({c["alpha"] for c in ok}, key=_alpha_key):
        for is_base in (True, False):
            group = [c for c in ok if c["alpha"] == a and (c["direction"] is None) == is_base]
            if not group:
                continue
            w = max(group, key=lambda c: c["rr"])
            name = f"confusion_{w['descriptor']}_alpha-{_alpha_tag(a)}.csv"
            files[name] = confusion_bytes(w["classes"], w["confusion"])
    written = []
    for name, data in files.items():
        _atomic_write(out / name, data)
        written.append(out / name)
    return written


def write_confusion(report, path) -> Path:
    _atomic_write(Path(path), confusion_bytes(report.classes, report.confusion.tolist()))
    return Path(path)


# -- feature-dimension audit -------------------------------------------------------------

# reference dimensions; the LBP-SIP rows assume a 60-bin/block variant that is not reproduced here
REFERENCE_DIMS = {
    "CASME II": {"hsdg": 50, "lbp_sip": 1500, "sip_sdg": 1550, "lbp_top": 4425, "lbp_sdg": 4475},
    "SMIC-HS": {"hsdg": 256, "lbp_sip": 7680, "sip_sdg": 7930, "lbp_top": 6144, "lbp_sdg": 6400},
}
BLOCKING = ("hsdg", "lbp_top", "lbp_sdg")


def reference_configs() -> dict:
    """Block grids and LBP settings of the two reference databases, with a probe volume size."""
    return {
        "CASME II": (PipelineConfig(BlockGrid(5, 5, 1), LbpTopParams(1, 1, 2, 8, 8, 8, True),
                                    HsdgParams(14, 1, 1, 2, 2), "lbp_sdg"), (168, 136, 30)),
        "SMIC-HS": (PipelineConfig(BlockGrid(8, 8, 2), LbpTopParams(1, 1, 1, 4, 4, 4, False),
                                   HsdgParams(1, 1, 1, 1, 2), "lbp_sdg"), (168, 136, 10)),
    }


def audit_dims() -> list[dict]:
    """Extracted and closed-form dimensions next to the reference values."""
    from dataclasses import replace

    rows = []
    for dataset, (cfg, size) in reference_configs().items():
        probe = synth_motion_volume("translate_up", size, texture_seed=7)
        for desc, expected in REFERENCE_DIMS[dataset].items():
            c = replace(cfg, descriptor=desc)
            dim = extract(probe, c).dim
            rows.append({"dataset": dataset, "descriptor": desc, "dim": dim,
                         "formula": feature_dimension(c), "expected": expected,
                         "match": dim == expected, "blocking": desc in BLOCKING})
    return rows


def write_dims_audit(path, rows=None) -> Path:
    rows = rows if rows is not None else audit_dims()
    header = ["dataset", "descriptor", "dim", "formula", "expected", "match", "blocking"]
    _atomic_write(Path(path), _csv_bytes(header, [[r[h] for h in header] for r in rows]))
    return Path(path)
