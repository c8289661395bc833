"""Deterministic CSV/JSON writers for run artifacts.

All writers use a fixed float format so identical inputs reproduce files
byte-for-byte (no locale, no timestamps).
"""

from __future__ import annotations

import json
import os
from typing import Iterable, Sequence


def fmt(x) -> str:
    """Render one cell. Floats use 12 significant digits, '.' decimal point."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(fmt(x) for x in row) + "\n")


def write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def _json_default(x):
    import numpy as np

    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x)!r}")


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
