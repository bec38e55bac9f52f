"""Counter-based random streams keyed by ``(seed, path_index, stream)``.

Each path owns an independent Philox stream, so ensembles can be generated
in any order, or in parallel, and still be bit-identical.  Draw ``k`` of a
stream is the ``k``-th 64-bit Philox output; normals come from the inverse
normal CDF so that one uniform maps to exactly one normal.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

WIENER = 0
CONTROL = 1
AUX = 2

_MASK64 = (1 << 64) - 1


def _bitgen(seed: int, path_index: int, stream: int) -> np.random.Philox:
    key = np.array([int(seed) & _MASK64, int(path_index) & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, 0, int(stream) & _MASK64], dtype=np.uint64)
    return np.random.Philox(key=key, counter=counter)


def raw_draws(seed: int, path_index: int, count: int, stream: int = WIENER,
              start: int = 0) -> np.ndarray:
    """``count`` raw uint64 draws starting at position ``start`` of the stream."""
    bg = _bitgen(seed, path_index, stream)
    block, offset = divmod(int(start), 4)
    if block:
        bg.advance(block)
    return bg.random_raw(count + offset)[offset:]


def uniforms(seed: int, path_index: int, count: int, stream: int = WIENER,
             start: int = 0) -> np.ndarray:
    """Uniforms in the open interval (0, 1) with 53-bit resolution."""
    raw = raw_draws(seed, path_index, count, stream, start)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def normals(seed: int, path_index: int, count: int, stream: int = WIENER,
            start: int = 0) -> np.ndarray:
    return ndtri(uniforms(seed, path_index, count, stream, start))


def integers(seed: int, path_index: int, count: int, high: int, stream: int = CONTROL,
             start: int = 0) -> np.ndarray:
    """Integers in ``[0, high)`` by scaling uniforms (bias below 2^-50)."""
    u = uniforms(seed, path_index, count, stream, start)
    return np.minimum((u * high).astype(np.int64), high - 1)
