"""Byte-stable persistence of run reports: CSV tables, a TOML summary and plot series."""

from __future__ import annotations

import csv
import io
import math
import numbers
from pathlib import Path

import tomli_w

from .config import dump_config, tomllib
from .recipes import RunReport


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, numbers.Integral):
        return str(value)
    try:
        x = float(value)
    except (TypeError, ValueError):
        return str(value)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _columns(rows: list[dict]) -> list[str]:
    cols: list[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    return cols


def table_csv(rows: list[dict], columns: list[str] | None = None) -> str:
    cols = columns if columns is not None else _columns(rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([fmt(r.get(c, "")) for c in cols])
    return buf.getvalue()


def read_table(path: str | Path) -> list[dict]:
    """Parse a table written by ``table_csv``; numeric cells become floats."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        parsed = {}
        for k, v in r.items():
            try:
                parsed[k] = float(v)
            except ValueError:
                parsed[k] = v
        out.append(parsed)
    return out


def _numeric(v) -> bool:
    return isinstance(v, numbers.Real) and not isinstance(v, bool)


def plot_csv(tables: dict[str, list[dict]]) -> str:
    """Long-format ``x, y, series``: first column is x, every other numeric column a series."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "series"])
    for name in sorted(tables):
        rows = tables[name]
        cols = _columns(rows)
        if len(cols) < 2:
            continue
        x = cols[0]
        for c in cols[1:]:
            for r in rows:
                xv, yv = r.get(x), r.get(c)
                if _numeric(xv) and _numeric(yv):
                    w.writerow([fmt(xv), fmt(yv), f"{name}:{c}"])
    return buf.getvalue()


def summary_dict(report: RunReport) -> dict:
    cfg = tomllib.loads(dump_config(report.config))
    return {
        "config": cfg,
        "metrics": {k: report.metrics[k] for k in sorted(report.metrics)},
        "passed": report.passed,
        "tables": sorted(report.tables),
        "verdicts": {
            v.name: {"passed": v.passed, "threshold": v.threshold, "value": v.value}
            for v in sorted(report.verdicts, key=lambda v: v.name)
        },
    }


def _sorted(d):
    if isinstance(d, dict):
        return {k: _sorted(d[k]) for k in sorted(d)}
    return d


def emit_report(report: RunReport, out_dir: str | Path) -> list[Path]:
    """Write ``<table>.csv``, ``summary.toml``, ``plot.csv`` and ``provenance.toml``.

    Everything except the provenance file depends only on the configuration
    and the computed numbers; wall-clock time lives in the provenance file.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from None
    files = {}
    for name, rows in sorted(report.tables.items()):
        files[f"{name}.csv"] = table_csv(rows)
    files["summary.toml"] = tomli_w.dumps(_sorted(summary_dict(report)))
    files["plot.csv"] = plot_csv(report.tables)
    files["provenance.toml"] = tomli_w.dumps(_sorted(dict(report.provenance)))
    written = []
    for fname, text in files.items():
        path = out / fname
        try:
            path.write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from None
        written.append(path)
    return written


def load_summary(out_dir: str | Path) -> dict:
    path = Path(out_dir) / "summary.toml"
    with open(path, "rb") as fh:
        return tomllib.load(fh)
