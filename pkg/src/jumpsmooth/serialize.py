"""Deterministic text output: 17 significant digits, complex values as [re, im]."""

from __future__ import annotations

import json
from typing import IO, Iterable, Sequence

import numpy as np


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def matrix_header(prefix: str, n: int) -> list[str]:
    return [f"{prefix}{part}_{i}{j}" for i in range(n) for j in range(n) for part in ("re", "im")]


def matrix_fields(m: np.ndarray) -> list[float]:
    flat = np.asarray(m).reshape(-1)
    out = []
    for z in flat:
        out.extend((z.real, z.imag))
    return out


def write_csv(fh: IO[str], header: Sequence[str], rows: Iterable[Sequence]) -> None:
    fh.write(",".join(header) + "\n")
    for row in rows:
        fh.write(",".join(fmt(v) for v in row) + "\n")


def json_text(obj) -> str:
    """Compact JSON with floats at 17 significant digits."""
    if isinstance(obj, dict):
        return "{" + ",".join(f'"{k}":{json_text(v)}' for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(json_text(v) for v in obj) + "]"
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, bool):
        return "true" if obj else "false"
    return fmt(obj)
