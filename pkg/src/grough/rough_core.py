"""Paths on uniform grids, level-2 data, Hölder semi-norms and Chen checks.

All suprema are taken over pairs of grid points.  They are therefore lower
bounds for the continuous-time norms of the underlying path.

Conventions
-----------
* A path with ``d`` coordinates is stored as an array of shape ``(N + 1, d)``.
* Level-2 data is stored per base step, ``step_blocks[k]`` being the
  ``d x d`` value over ``[t_k, t_{k+1}]``.  Values over coarser grid-aligned
  intervals are rebuilt with Chen's identity.
* Vectors use the Euclidean norm, matrices and tensors the Frobenius norm.
* A controlled integrand ``Y`` takes values in ``L(R^d, R^n)`` (shape
  ``(n, d)``) and its Gubinelli derivative ``Y'`` has shape ``(n, d, d)``
  with the derivative direction on the last axis, so that
  ``(Y' x)[a, b] = sum_c Y'[a, b, c] x[c]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Callable, Literal

import numpy as np

LiftKind = Literal["ito", "stratonovich"]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = t0 + k * T / n_steps`` on ``[t0, t0 + T]``."""

    T: float
    n_steps: int
    t0: float = 0.0

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("degenerate grid: n_steps must be a positive integer")
        if not np.isfinite(self.T) or self.T <= 0:
            raise ValueError("degenerate grid: T must be positive")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "T", float(self.T))

    @property
    def step(self) -> float:
        return self.T / self.n_steps

    @cached_property
    def times(self) -> np.ndarray:
        return _frozen(self.t0 + self.step * np.arange(self.n_steps + 1))

    def same_as(self, other: "TimeGrid") -> bool:
        return (self.n_steps == other.n_steps and self.T == other.T
                and self.t0 == other.t0)


@dataclass(frozen=True)
class GridPath:
    """A ``d``-dimensional path sampled at every point of a :class:`TimeGrid`."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.grid.n_steps + 1:
            raise ValueError(
                f"path values must have shape ({self.grid.n_steps + 1}, d), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    @cached_property
    def increments(self) -> np.ndarray:
        return _frozen(np.diff(self.values, axis=0))

    def increment(self, i: int, j: int) -> np.ndarray:
        return self.values[j] - self.values[i]

    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    def scaled(self, lam: float) -> "GridPath":
        return GridPath(self.grid, lam * self.values)


@dataclass(frozen=True)
class LevelTwo:
    step_blocks: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.step_blocks, dtype=np.float64)
        if b.ndim != 3 or b.shape[1] != b.shape[2]:
            raise ValueError(f"step_blocks must have shape (N, d, d), got {b.shape}")
        if not np.all(np.isfinite(b)):
            raise ValueError("step_blocks must be finite")
        object.__setattr__(self, "step_blocks", _frozen(b))

    @property
    def n_steps(self) -> int:
        return self.step_blocks.shape[0]

    @property
    def dim(self) -> int:
        return self.step_blocks.shape[1]

    @classmethod
    def zeros(cls, n_steps: int, dim: int) -> "LevelTwo":
        return cls(np.zeros((n_steps, dim, dim)))


@dataclass(frozen=True)
class RoughPath:
    """A path together with level-2 step data; Chen-consistent by construction."""

    path: GridPath
    level2: LevelTwo
    lift_kind: LiftKind = "ito"

    def __post_init__(self):
        if self.level2.n_steps != self.path.n_steps:
            raise ValueError("level-2 data and path have different numbers of steps")
        if self.level2.dim != self.path.dim:
            raise ValueError("level-2 data and path have different dimensions")
        if self.lift_kind not in ("ito", "stratonovich"):
            raise ValueError(f"unknown lift kind {self.lift_kind!r}")

    @property
    def grid(self) -> TimeGrid:
        return self.path.grid

    @property
    def dim(self) -> int:
        return self.path.dim

    @cached_property
    def _prefix(self) -> tuple[np.ndarray, np.ndarray]:
        # S_k = sum_{m<k} blocks[m],  C_k = sum_{m<k} X_m (x) dX_m
        x = self.path.values
        dx = self.path.increments
        d = self.dim
        s = np.zeros((x.shape[0], d, d))
        np.cumsum(self.level2.step_blocks, axis=0, out=s[1:])
        c = np.zeros_like(s)
        np.cumsum(x[:-1, :, None] * dx[:, None, :], axis=0, out=c[1:])
        return s, c

    def level2_lag(self, h: int) -> np.ndarray:
        """Level-2 values over all intervals ``[t_i, t_{i+h}]``, shape ``(N-h+1, d, d)``.

        Uses prefix sums, so values carry an absolute rounding error of the
        order of the prefix magnitudes.  Meant for norms, not exactness checks.
        """
        s, c = self._prefix
        x = self.path.values
        xi, xj = x[:-h], x[h:]
        return (s[h:] - s[:-h]) + (c[h:] - c[:-h]) - xi[:, :, None] * (xj - xi)[:, None, :]


@dataclass(frozen=True)
class ControlledPath:
    """Integrand ``(Y, Y')`` controlled by the path of ``base``."""

    base: RoughPath
    y: np.ndarray
    y_prime: np.ndarray

    def __post_init__(self):
        n1 = self.base.grid.n_steps + 1
        d = self.base.dim
        y = np.asarray(self.y, dtype=np.float64)
        yp = np.asarray(self.y_prime, dtype=np.float64)
        if y.ndim == 1:
            y = y.reshape(n1, 1, 1) if d == 1 else y
        elif y.ndim == 2:
            y = y[:, None, :]
        if yp.ndim == 1 and d == 1:
            yp = yp.reshape(n1, 1, 1, 1)
        elif yp.ndim == 3:
            yp = yp[:, None, :, :]
        if y.ndim != 3 or y.shape[0] != n1 or y.shape[2] != d:
            raise ValueError(f"dimension mismatch: Y must have shape ({n1}, n, {d}), got {y.shape}")
        n = y.shape[1]
        if yp.shape != (n1, n, d, d):
            raise ValueError(
                f"dimension mismatch: Y' must have shape ({n1}, {n}, {d}, {d}), got {yp.shape}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(yp))):
            raise ValueError("controlled path values must be finite")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "y_prime", _frozen(yp))

    @property
    def grid(self) -> TimeGrid:
        return self.base.grid

    @property
    def out_dim(self) -> int:
        return self.y.shape[1]

    def scaled(self, lam: float) -> "ControlledPath":
        return ControlledPath(self.base, lam * self.y, lam * self.y_prime)

    def __add__(self, other: "ControlledPath") -> "ControlledPath":
        if other.base is not self.base and not other.grid.same_as(self.grid):
            raise ValueError("controlled paths live on different grids")
        return ControlledPath(self.base, self.y + other.y, self.y_prime + other.y_prime)

    def __sub__(self, other: "ControlledPath") -> "ControlledPath":
        return self + other.scaled(-1.0)

    def remainder_lag(self, h: int) -> np.ndarray:
        x = self.base.path.values
        dx = x[h:] - x[:-h]
        return (self.y[h:] - self.y[:-h]) - np.einsum("kabc,kc->kab", self.y_prime[:-h], dx)


@dataclass(frozen=True)
class AlphaParams:
    alpha: float = 0.4
    theta: float = 0.55
    epsilon0: float | None = None

    def __post_init__(self):
        if not (1 / 3 < self.alpha < 1 / 2):
            raise ValueError("alpha must lie in (1/3, 1/2)")
        if not (0 < self.theta < 1):
            raise ValueError("theta must lie in (0, 1)")
        if self.theta >= 2 * self.alpha:
            raise ValueError("hypothesis violated: theta must be below 2*alpha")

    def scale(self, grid: TimeGrid) -> float:
        return grid.T / 2 if self.epsilon0 is None else self.epsilon0


def _pair_sup(lag_norms: Callable[[int], np.ndarray], grid: TimeGrid, exponent: float) -> float:
    best = 0.0
    dt = grid.step
    for h in range(1, grid.n_steps + 1):
        m = float(np.max(lag_norms(h)))
        if m > 0.0:
            best = max(best, m / (h * dt) ** exponent)
    return best


def _check_alpha(alpha: float) -> None:
    if not (0 < alpha <= 1):
        raise ValueError("alpha must lie in (0, 1]")


def hoelder_sup(values: np.ndarray, grid: TimeGrid, alpha: float) -> float:
    """Grid α-Hölder semi-norm of an array of shape ``(N + 1, ...)``."""
    v = np.asarray(values, dtype=np.float64).reshape(grid.n_steps + 1, -1)
    return _pair_sup(lambda h: np.linalg.norm(v[h:] - v[:-h], axis=1), grid, alpha)


def hoelder_norm(path: GridPath, alpha: float) -> float:
    """``max_{s<t} |X_{s,t}| / (t-s)^alpha`` over all grid pairs."""
    _check_alpha(alpha)
    return hoelder_sup(path.values, path.grid, alpha)


def two_alpha_norm(rp: RoughPath, alpha: float) -> float:
    """``max_{s<t} |XX_{s,t}| / (t-s)^(2 alpha)`` with XX rebuilt by Chen's identity.

    Takes the whole rough path because the reconstruction needs level-1
    increments as well as the step blocks.
    """
    _check_alpha(alpha)
    d2 = rp.dim * rp.dim
    return _pair_sup(
        lambda h: np.linalg.norm(rp.level2_lag(h).reshape(-1, d2), axis=1),
        rp.grid, 2 * alpha)


def reconstruct_level2(rp: RoughPath, i: int, j: int) -> np.ndarray:
    """Level-2 value over ``[t_i, t_j]`` by direct Chen accumulation, O(j - i)."""
    if not (0 <= i < j <= rp.grid.n_steps):
        raise ValueError(f"empty interval: need 0 <= i < j <= N, got ({i}, {j})")
    x = rp.path.values
    dx = rp.path.increments[i:j]
    rel = x[i:j] - x[i]
    return rp.level2.step_blocks[i:j].sum(axis=0) + rel.T @ dx


def level2_function(rp: RoughPath) -> Callable[[int, int], np.ndarray]:
    return lambda i, j: reconstruct_level2(rp, i, j)


def all_triples(n_steps: int) -> np.ndarray:
    return np.array(list(combinations(range(n_steps + 1), 3)), dtype=np.int64).reshape(-1, 3)


def sample_triples(n_steps: int, count: int, seed: int = 0) -> np.ndarray:
    """Random grid triples ``i < j < k``; needs ``n_steps >= 2``."""
    if n_steps < 2:
        raise ValueError("degenerate grid: need at least 2 steps for a triple")
    rng = np.random.default_rng(seed)
    out = np.empty((count, 3), dtype=np.int64)
    filled = 0
    while filled < count:
        cand = np.sort(rng.integers(0, n_steps + 1, size=(2 * count, 3)), axis=1)
        ok = cand[(cand[:, 0] < cand[:, 1]) & (cand[:, 1] < cand[:, 2])]
        take = min(len(ok), count - filled)
        out[filled:filled + take] = ok[:take]
        filled += take
    return out


def chen_defect(path: GridPath, level2_fn: Callable[[int, int], np.ndarray],
                triples: np.ndarray | None = None) -> float:
    """Largest violation of Chen's identity over grid triples ``i < j < k``.

    Every triple is checked when ``triples`` is None, which costs O(N^3) and
    is only practical for small grids; pass an explicit sample otherwise.
    """
    if triples is None:
        triples = all_triples(path.n_steps)
    x = path.values
    cache: dict[tuple[int, int], np.ndarray] = {}

    def lv(i, j):
        key = (int(i), int(j))
        if key not in cache:
            cache[key] = np.asarray(level2_fn(*key), dtype=np.float64)
        return cache[key]

    worst = 0.0
    for i, j, k in np.asarray(triples, dtype=np.int64):
        resid = lv(i, k) - lv(i, j) - lv(j, k) - np.outer(x[j] - x[i], x[k] - x[j])
        worst = max(worst, float(np.linalg.norm(resid)))
    return worst


def rough_path_seminorm(rp: RoughPath, alpha: float) -> float:
    return hoelder_norm(rp.path, alpha) + np.sqrt(two_alpha_norm(rp, alpha))


def remainder(cp: ControlledPath, i: int, j: int) -> np.ndarray:
    """``R_{i,j} = Y_{i,j} - Y'_i X_{i,j}``, shape ``(n, d)``."""
    if not (0 <= i < j <= cp.grid.n_steps):
        raise ValueError(f"empty interval: need 0 <= i < j <= N, got ({i}, {j})")
    x = cp.base.path.values
    return (cp.y[j] - cp.y[i]) - cp.y_prime[i] @ (x[j] - x[i])


def remainder_norm(cp: ControlledPath, alpha: float) -> float:
    _check_alpha(alpha)
    return _pair_sup(
        lambda h: np.linalg.norm(cp.remainder_lag(h).reshape(-1, cp.y[0].size), axis=1),
        cp.grid, 2 * alpha)


def controlled_seminorm(cp: ControlledPath, alpha: float) -> float:
    """``||Y'||_alpha + ||R^Y||_{2 alpha}``."""
    return hoelder_sup(cp.y_prime, cp.grid, alpha) + remainder_norm(cp, alpha)
