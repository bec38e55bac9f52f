"""Compensated Riemann sums against rough paths and their diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .rough_core import (
    ControlledPath,
    RoughPath,
    TimeGrid,
    hoelder_norm,
    hoelder_sup,
    remainder_norm,
    two_alpha_norm,
)


@dataclass(frozen=True, eq=False)
class Partition:
    """Strictly increasing grid indices from ``0`` to ``n_steps``."""

    indices: np.ndarray
    n_steps: int

    def __post_init__(self):
        idx = np.asarray(self.indices)
        if idx.ndim != 1 or len(idx) < 2:
            raise ValueError("partition needs at least two points")
        if not np.issubdtype(idx.dtype, np.integer):
            if not np.all(idx == np.round(idx)):
                raise ValueError("partition not grid-aligned: indices must be integers")
            idx = np.round(idx)
        idx = idx.astype(np.int64)
        if idx[0] != 0 or idx[-1] != self.n_steps:
            raise ValueError("partition not grid-aligned: must run from 0 to n_steps")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("partition indices must be strictly increasing")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @classmethod
    def uniform(cls, n_steps: int, stride: int) -> "Partition":
        if stride < 1 or n_steps % stride:
            raise ValueError("partition not grid-aligned: stride must divide n_steps")
        return cls(np.arange(0, n_steps + 1, stride), n_steps)

    @classmethod
    def base(cls, n_steps: int) -> "Partition":
        return cls.uniform(n_steps, 1)

    @classmethod
    def from_times(cls, grid: TimeGrid, times: Sequence[float]) -> "Partition":
        k = (np.asarray(times, dtype=np.float64) - grid.t0) / grid.step
        if not np.allclose(k, np.round(k), rtol=0, atol=1e-9):
            raise ValueError("partition not grid-aligned")
        return cls(np.round(k).astype(np.int64), grid.n_steps)

    @classmethod
    def random(cls, n_steps: int, n_points: int, seed: int = 0) -> "Partition":
        g = np.random.default_rng(seed)
        inner = g.choice(np.arange(1, n_steps), size=min(n_points, n_steps - 1), replace=False)
        return cls(np.concatenate([[0], np.sort(inner), [n_steps]]), n_steps)

    def modulus(self, grid: TimeGrid) -> float:
        return float(np.max(np.diff(self.indices))) * grid.step

    def restrict(self, end: int) -> "Partition":
        """Points of the partition up to ``end`` (which must be one of them)."""
        idx = self.indices[self.indices <= end]
        if idx[-1] != end:
            raise ValueError("restriction point is not in the partition")
        return Partition(idx, end)


def dyadic_partitions(n_steps: int, levels: int | None = None) -> list[Partition]:
    """Uniform partitions with strides ``n_steps, n_steps/2, ..., 1`` (coarse to fine)."""
    out = []
    stride = n_steps
    while stride >= 1:
        if n_steps % stride == 0:
            out.append(Partition.uniform(n_steps, stride))
        if stride == 1:
            break
        stride //= 2
    if levels is not None:
        out = out[-levels:]
    return out


@dataclass(frozen=True, eq=False)
class IntegralReport:
    value: np.ndarray
    terms: np.ndarray
    partition: Partition
    max_local_error: float
    fitted_K: float


def interval_level2(rp: RoughPath, part: Partition) -> np.ndarray:
    """Chen-reconstructed level-2 over each partition interval, O(N) overall."""
    idx = part.indices
    lengths = np.diff(idx)
    owner = np.repeat(idx[:-1], lengths)
    x = rp.path.values
    rel = x[:-1] - x[owner]
    terms = rel[:, :, None] * rp.path.increments[:, None, :] + rp.level2.step_blocks
    return np.add.reduceat(terms, idx[:-1], axis=0)


def compensated_terms(cp: ControlledPath, rp: RoughPath, part: Partition) -> np.ndarray:
    """``Y_s X_{s,t} + Y'_s XX_{s,t}`` per partition interval, shape ``(m, n)``."""
    idx = part.indices
    x = rp.path.values
    dx = x[idx[1:]] - x[idx[:-1]]
    xx = interval_level2(rp, part)
    ys, yps = cp.y[idx[:-1]], cp.y_prime[idx[:-1]]
    # Y' is indexed [a, b, c] with c the derivative direction; XX[c, b] = int X^c dX^b.
    return np.einsum("kab,kb->ka", ys, dx) + np.einsum("kabc,kcb->ka", yps, xx)


def _check_shared(cp: ControlledPath, rp: RoughPath, part: Partition | None = None) -> None:
    if not cp.grid.same_as(rp.grid):
        raise ValueError("controlled path and rough path live on different grids")
    if cp.y.shape[2] != rp.dim:
        raise ValueError("dimension mismatch between integrand and rough path")
    if part is not None and part.n_steps != rp.grid.n_steps:
        raise ValueError("partition not grid-aligned for this rough path")


def running_integral(cp: ControlledPath, rp: RoughPath) -> np.ndarray:
    """Base-grid compensated sums ``int_0^{t_k} Y dX`` for every k, shape ``(N+1, n)``."""
    _check_shared(cp, rp)
    terms = compensated_terms(cp, rp, Partition.base(rp.grid.n_steps))
    out = np.zeros((rp.grid.n_steps + 1, cp.out_dim))
    np.cumsum(terms, axis=0, out=out[1:])
    return out


def gubinelli_integral(cp: ControlledPath, rp: RoughPath, part: Partition,
                       alpha: float | None = None) -> IntegralReport:
    """Compensated Riemann sum ``sum (Y_s X_{s,t} + Y'_s XX_{s,t})`` over ``part``.

    ``max_local_error`` compares each coarse term with the base-grid sum over
    the same interval; ``fitted_K`` scales it by the local bound when
    ``alpha`` is given (nan otherwise).
    """
    _check_shared(cp, rp, part)
    terms = compensated_terms(cp, rp, part)
    value = terms.sum(axis=0)
    fine = running_integral(cp, rp)
    idx = part.indices
    local = np.linalg.norm(fine[idx[1:]] - fine[idx[:-1]] - terms, axis=1)
    max_local = float(local.max())
    k_hat = float("nan")
    if alpha is not None:
        denom = _bound_scale(cp, rp, alpha)
        if denom > 0:
            widths = np.diff(idx) * rp.grid.step
            k_hat = float(np.max(local / (denom * widths ** (3 * alpha))))
    return IntegralReport(value, terms, part, max_local, k_hat)


def _bound_scale(cp: ControlledPath, rp: RoughPath, alpha: float) -> float:
    return (hoelder_norm(rp.path, alpha) * remainder_norm(cp, alpha)
            + two_alpha_norm(rp, alpha) * hoelder_sup(cp.y_prime, cp.grid, alpha))


def controlled_lift_smooth(F: Callable[[np.ndarray], np.ndarray],
                           DF: Callable[[np.ndarray], np.ndarray],
                           rp: RoughPath) -> ControlledPath:
    """``(Y, Y') = (F(X), DF(X))`` evaluated at every grid point.

    ``F`` maps an array ``(N+1, d)`` of points to ``(N+1, n, d)`` (or
    ``(N+1, d)`` for n = 1, or ``(N+1,)`` when d = 1); ``DF`` returns the
    Jacobian with the derivative direction last.
    """
    x = rp.path.values
    y = np.asarray(F(x), dtype=np.float64)
    yp = np.asarray(DF(x), dtype=np.float64)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(yp))):
        raise ValueError("non-finite values of F or DF along the path")
    if rp.dim == 1:
        y = y.reshape(x.shape[0], -1, 1)
        yp = yp.reshape(x.shape[0], -1, 1, 1)
    return ControlledPath(rp, y, yp)


def identity_integrand(rp: RoughPath) -> ControlledPath:
    """``(Y, Y') = (X, Id)``: ``int Y dX = sum_b int X^b dX^b``."""
    d = rp.dim
    n1 = rp.grid.n_steps + 1
    yp = np.broadcast_to(np.eye(d)[None, None], (n1, 1, d, d))
    return ControlledPath(rp, rp.path.values[:, None, :], yp)


def local_error_check(cp: ControlledPath, rp: RoughPath, alpha: float,
                      zero_tol: float = 1e-12) -> float:
    """Empirical constant of the local error bound over all grid pairs.

    Returns ``max |int_s^t Y dX - Y_s X_{s,t} - Y'_s XX_{s,t}| /
    (scale * (t-s)^(3 alpha))`` where the integral is the base-grid sum.
    Returns 0 when every numerator is at rounding level, i.e. below
    ``zero_tol * (1 + max |int Y dX|)``, whatever the scale.
    """
    _check_shared(cp, rp)
    fine = running_integral(cp, rp)
    x = rp.path.values
    best = raw = 0.0
    dt = rp.grid.step
    for h in range(2, rp.grid.n_steps + 1):
        xx = rp.level2_lag(h)
        dx = x[h:] - x[:-h]
        approx = (np.einsum("kab,kb->ka", cp.y[:-h], dx)
                  + np.einsum("kabc,kcb->ka", cp.y_prime[:-h], xx))
        err = np.linalg.norm(fine[h:] - fine[:-h] - approx, axis=1)
        raw = max(raw, float(err.max()))
        best = max(best, float(err.max()) / (h * dt) ** (3 * alpha))
    if raw <= zero_tol * (1.0 + float(np.abs(fine).max())):
        return 0.0
    denom = _bound_scale(cp, rp, alpha)
    if not denom > 0:
        raise ValueError("degenerate bound: nonzero local error but the bound scale vanishes")
    return best / denom


@dataclass(frozen=True, eq=False)
class EquivalenceReport:
    moduli: np.ndarray
    differences: np.ndarray
    ito_value: np.ndarray
    rough_values: np.ndarray
    fitted_order: float = float("nan")
    notes: list[str] = field(default_factory=list)


def base_ito_sum(cp: ControlledPath, rp: RoughPath) -> np.ndarray:
    """Left-point sum ``sum_k Y_k dX_k`` on the base grid."""
    return np.einsum("kab,kb->a", cp.y[:-1], rp.path.increments)


def ito_vs_rough_equivalence(cp: ControlledPath, rp: RoughPath,
                             partitions: Sequence[Partition] | None = None) -> EquivalenceReport:
    """Distance between the compensated sums on ``partitions`` and the base-grid Itô sum."""
    if rp.lift_kind != "ito":
        raise ValueError("equivalence with the Itô sum needs an Itô lift")
    parts = list(partitions) if partitions is not None else dyadic_partitions(rp.grid.n_steps)
    ito = base_ito_sum(cp, rp)
    vals, diffs, mods = [], [], []
    for part in parts:
        _check_shared(cp, rp, part)
        v = compensated_terms(cp, rp, part).sum(axis=0)
        vals.append(v)
        diffs.append(float(np.linalg.norm(v - ito)))
        mods.append(part.modulus(rp.grid))
    mods_a, diffs_a = np.array(mods), np.array(diffs)
    order = fit_order(mods_a, diffs_a)
    return EquivalenceReport(mods_a, diffs_a, ito, np.array(vals), order)


def fit_order(moduli: np.ndarray, gaps: np.ndarray, floor: float = 1e-13) -> float:
    """Slope of ``log gap`` on ``log modulus`` over gaps above ``floor``; nan if < 2 points."""
    keep = gaps > floor
    if np.count_nonzero(keep) < 2 or np.ptp(np.log(moduli[keep])) == 0:
        return float("nan")
    return float(stats.linregress(np.log(moduli[keep]), np.log(gaps[keep])).slope)
