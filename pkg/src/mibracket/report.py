"""Report serialisation and flat tables.

``report.json`` holds the deterministic body only; wall-clock timing goes
to ``timing.json`` so that reruns with one master seed produce a
byte-identical ``report.json``.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .errors import DataError, ValidationFailure
from .fusion import blend

REPORT_FILE = "report.json"
TIMING_FILE = "timing.json"
SELF_CONSISTENCY_TOL = 1e-12

BRACKET_COLUMNS = ["combination", "pair", "n", "mine", "mine_floored", "club", "delta",
                   "ksg", "weight", "final", "raw_mine", "raw_club"]
TABLE2_COLUMNS = ["pair", "combinations", "mine", "mine_floored", "club", "delta", "ksg",
                  "final_mean", "final_std"]
TRACE_COLUMNS = ["combination", "pair", "member", "epoch", "mine", "club", "delta",
                 "lr_mine", "lr_club", "stopped_epoch"]
ATTRIBUTION_COLUMNS = ["dimension", "n", "i_source", "i_filter", "a_source", "a_filter",
                       "ci_low", "ci_high", "b", "level", "ci_method", "floored"]


def check_self_consistency(body, tol=SELF_CONSISTENCY_TOL):
    """Recompute every row's Final from its own MINE/CLUB/KSG/weight fields."""
    bad = []
    for row in body.get("rows", []):
        again = blend(row["mine"], row["club"], row["ksg"], row["weight"])
        if not abs(again - row["final"]) <= tol:
            bad.append(f"{row['combination']}/{row['pair']}: final {row['final']!r} != recomputed {again!r}")
        if row["mine"] > row["club"]:
            bad.append(f"{row['combination']}/{row['pair']}: mine exceeds club after enforcement")
    for row in body.get("attribution", []):
        if abs(row["a_source"] + row["a_filter"] - 1.0) > tol:
            bad.append(f"attribution {row['dimension']}: shares do not sum to 1")
    if bad:
        raise ValidationFailure("report self-consistency failed:\n  " + "\n  ".join(bad))


def dumps(body):
    return json.dumps(body, indent=1, sort_keys=True, allow_nan=False) + "\n"


def write_report(body, out_dir, wall_clock=None):
    """Write ``report.json`` (+ ``timing.json``) and every table; returns the out dir."""
    check_self_consistency(body)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / REPORT_FILE).write_text(dumps(body), encoding="utf-8")
    if wall_clock is not None:
        (out / TIMING_FILE).write_text(json.dumps({"wall_clock_seconds": wall_clock}) + "\n")
    render_tables(body, out)
    return out


def load_report(path):
    path = Path(path)
    if path.is_dir():
        path = path / REPORT_FILE
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read report {path}: {exc}") from None


def _write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _cell(r.get(k)) for k in columns})


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ";".join(str(x) for x in v)
    return v


def heatmap_rows(body):
    """Combination x pair matrix of Final values (heat-map layout)."""
    pairs = list(dict.fromkeys(r["pair"] for r in body.get("rows", [])))
    combos = list(dict.fromkeys(r["combination"] for r in body.get("rows", [])))
    cells = {(r["combination"], r["pair"]): r["final"] for r in body.get("rows", [])}
    out = []
    for c in combos:
        row = {"combination": c}
        for p in pairs:
            row[p] = cells.get((c, p), math.nan)
        out.append(row)
    return ["combination", *pairs], out


def trace_rows(body):
    for t in body.get("traces", []):
        for e in range(len(t["mine"])):
            yield {
                "combination": t["combination"],
                "pair": t["pair"],
                "member": t["member"],
                "epoch": e + 1,
                "mine": t["mine"][e],
                "club": t["club"][e],
                "delta": t["delta"][e],
                "lr_mine": t["lr_mine"][e],
                "lr_club": t["lr_club"][e],
                "stopped_epoch": t["stopped_epoch"],
            }


def render_tables(body, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if body.get("rows"):
        _write_csv(out / "brackets.csv", BRACKET_COLUMNS, body["rows"])
        _write_csv(out / "table2.csv", TABLE2_COLUMNS, body["summary"])
        cols, rows = heatmap_rows(body)
        _write_csv(out / "heatmap.csv", cols, rows)
        _write_csv(out / "traces.csv", TRACE_COLUMNS, trace_rows(body))
        written += ["brackets.csv", "table2.csv", "heatmap.csv", "traces.csv"]
    if body.get("attribution"):
        _write_csv(out / "attribution.csv", ATTRIBUTION_COLUMNS, body["attribution"])
        written.append("attribution.csv")
    return written


def format_table2(body):
    """Plain-text fusion summary for terminal output."""
    lines = [f"{'Pair':<24}{'MINE':>8}{'CLUB':>8}{'Delta':>8}{'KSG':>8}   Final (mean +- std)"]
    for s in body.get("summary", []):
        lines.append(
            f"{s['pair']:<24}{s['mine_floored']:>8.2f}{s['club']:>8.2f}{s['delta']:>8.2f}"
            f"{s['ksg']:>8.2f}   {s['final_mean']:.2f} +- {s['final_std']:.2f}"
        )
    return "\n".join(lines)
