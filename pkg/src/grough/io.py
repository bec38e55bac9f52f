"""CSV and JSON formats for paths, level-2 data and result tables.

Path files have a header ``t,x1,...,xd`` and one row per grid point.
Level-2 files list step blocks as ``step_index,i,j,value`` (0-based).
Floats are written with ``%.17g`` so a write/read cycle is bit-exact.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .rough_core import GridPath, LevelTwo, TimeGrid

FLOAT_FMT = "%.17g"
LEVEL2_HEADER = ["step_index", "i", "j", "value"]


class FormatError(ValueError):
    """Malformed input file; the message names the offending line."""


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return str(v)


def write_csv(rows: Iterable[Sequence], header: Sequence[str], file) -> Path:
    """Write a table; floats at full precision, ``\\n`` line endings."""
    file = Path(file)
    file.parent.mkdir(parents=True, exist_ok=True)
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return file


def path_header(dim: int) -> list[str]:
    return ["t"] + [f"x{k + 1}" for k in range(dim)]


def write_path_csv(path: GridPath, file) -> Path:
    t = path.grid.times
    return write_csv((np.concatenate([[t[k]], path.values[k]]) for k in range(len(t))),
                     path_header(path.dim), file)


def _read_rows(file, expected: Sequence[str] | None = None):
    with open(file, newline="") as fh:
        rd = csv.reader(fh)
        try:
            header = [h.strip() for h in next(rd)]
        except StopIteration:
            raise FormatError(f"{file}: empty file") from None
        if expected is not None and header != list(expected):
            raise FormatError(f"{file}: line 1: missing or wrong header; expected columns "
                              f"{','.join(expected)}, got {','.join(header)}")
        rows = []
        for line_no, row in enumerate(rd, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"{file}: line {line_no}: expected {len(header)} fields, "
                                  f"got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise FormatError(f"{file}: line {line_no}: non-numeric value in {row}") from None
            if not all(math.isfinite(v) for v in rows[-1]):
                raise FormatError(f"{file}: line {line_no}: non-finite value")
        return header, np.array(rows, dtype=np.float64).reshape(len(rows), len(header))


def load_path_csv(file, rel_tol: float = 1e-9) -> GridPath:
    """Read a path file back into a :class:`GridPath` on a uniform grid."""
    with open(file, newline="") as fh:
        first = fh.readline().strip().split(",")
    dim = len(first) - 1
    if dim < 1 or first != path_header(dim):
        raise FormatError(f"{file}: line 1: missing or wrong header; expected columns "
                          f"t,x1,...,xd (e.g. {','.join(path_header(max(dim, 1)))})")
    _, data = _read_rows(file, path_header(dim))
    if len(data) < 2:
        raise FormatError(f"{file}: need at least two rows")
    t = data[:, 0]
    n = len(t) - 1
    grid = TimeGrid(t[-1] - t[0], n, t[0])
    bad = np.flatnonzero(~np.isclose(t, grid.times, rtol=0, atol=rel_tol * max(1.0, grid.T)))
    if bad.size:
        raise FormatError(f"{file}: line {bad[0] + 2}: non-uniform time column "
                          f"(t={float(t[bad[0]])!r}, expected {float(grid.times[bad[0]])!r})")
    return GridPath(grid, data[:, 1:])


def write_level2_csv(level2: LevelTwo, file) -> Path:
    blocks = level2.step_blocks
    n, d, _ = blocks.shape
    k, i, j = np.meshgrid(np.arange(n), np.arange(d), np.arange(d), indexing="ij")
    return write_csv(zip(k.ravel(), i.ravel(), j.ravel(), blocks.ravel()), LEVEL2_HEADER, file)


def load_level2_csv(file, n_steps: int, dim: int) -> LevelTwo:
    """Entries not listed are zero; indices must be in range."""
    _, data = _read_rows(file, LEVEL2_HEADER)
    blocks = np.zeros((n_steps, dim, dim))
    for row_no, (k, i, j, v) in enumerate(data, start=2):
        if not (k == int(k) and i == int(i) and j == int(j)):
            raise FormatError(f"{file}: line {row_no}: indices must be integers")
        if not (0 <= k < n_steps and 0 <= i < dim and 0 <= j < dim):
            raise FormatError(f"{file}: line {row_no}: index out of range")
        blocks[int(k), int(i), int(j)] = v
    return LevelTwo(blocks)


def to_jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        # JSON has no inf/nan; keep them readable and round-trippable as strings
        return f if math.isfinite(f) else repr(f)
    return obj


def write_json(obj, file) -> Path:
    """Deterministic JSON: sorted keys, fixed separators, trailing newline."""
    file = Path(file)
    file.parent.mkdir(parents=True, exist_ok=True)
    file.write_text(json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n")
    return file
