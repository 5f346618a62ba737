"""Deterministic emission of tabular and structured results.

All floats render at 12 significant digits with stable row and key order,
so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import json
import math
import os

__all__ = ["fmt", "write_csv", "write_json", "emit_report"]


def fmt(x) -> str:
    """Stable scalar formatting for CSV cells."""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.12g}"
    return str(x)


def _canonical(obj):
    """Round floats to the emitted precision; stringify non-finite."""
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            return fmt(obj)
        return float(f"{obj:.12g}")
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if hasattr(obj, "item") and not hasattr(obj, "__len__"):
        return _canonical(obj.item())
    if hasattr(obj, "tolist"):
        return _canonical(obj.tolist())
    return obj


def _ensure_dir(path: str):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def write_csv(path: str, header: list[str], rows) -> None:
    _ensure_dir(path)
    lines = [",".join(header)]
    lines.extend(",".join(fmt(cell) for cell in row) for row in rows)
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_json(path: str, obj) -> None:
    _ensure_dir(path)
    with open(path, "w") as fh:
        json.dump(_canonical(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def emit_report(results: dict, paths: dict) -> list[str]:
    """Write whichever artifacts were produced and requested.

    ``results`` may hold ``csv`` as ``(header, rows)`` and/or ``json``;
    ``paths`` maps the same keys to file names.  Returns written paths.
    """
    written = []
    if "csv" in results and paths.get("csv"):
        header, rows = results["csv"]
        write_csv(paths["csv"], header, rows)
        written.append(paths["csv"])
    if "json" in results and paths.get("json"):
        write_json(paths["json"], results["json"])
        written.append(paths["json"])
    return written
