"""Discrete Itô and Stratonovich integrals, cross variation and Itô-formula residuals.

Integrands are evaluated at left endpoints only, so every integral here is
adapted by construction.  An integrand path ``y`` of dimension ``n * d``
against a ``d``-dimensional ``b`` is read as ``n x d`` matrices (row-major);
the integral then has ``n`` coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .gbm_sim import quadratic_variation
from .rough_core import GridPath, TimeGrid
from .rough_integral import Partition, dyadic_partitions, fit_order


@dataclass(frozen=True, eq=False)
class CrossVariationPath:
    grid: TimeGrid
    values: np.ndarray  # (N+1, m, d)


@dataclass(frozen=True, eq=False)
class IntegrandSpec:
    """How to build an integrand path from a driving path ``b``.

    ``smooth_of_B`` uses ``F``; ``ito_process`` builds
    ``xi + int beta dB + int drift dt + int gamma d<B>`` with left-point sums,
    the handles being called as ``h(t, b)`` on whole arrays (``t`` of shape
    ``(N+1,)``, ``b`` of shape ``(N+1, d)``).
    """

    kind: Literal["constant", "coordinate", "smooth_of_B", "ito_process"]
    constant: float = 1.0
    F: Callable[[np.ndarray], np.ndarray] | None = None
    xi: float = 0.0
    beta: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    drift: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    gamma: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def evaluate(self, b: GridPath) -> GridPath:
        n1 = b.n_steps + 1
        if self.kind == "constant":
            return GridPath(b.grid, np.full((n1, 1), float(self.constant)))
        if self.kind == "coordinate":
            return b
        if self.kind == "smooth_of_B":
            if self.F is None:
                raise ValueError("smooth_of_B integrand needs F")
            return GridPath(b.grid, np.asarray(self.F(b.values), dtype=np.float64).reshape(n1, -1))
        if self.kind == "ito_process":
            return ito_process(b, self.beta, self.drift, self.gamma, self.xi)
        raise ValueError(f"unknown integrand kind {self.kind!r}")


def _shape(y: GridPath, b: GridPath) -> int:
    if not y.grid.same_as(b.grid):
        raise ValueError("grid mismatch between integrand and integrator")
    if y.dim % b.dim:
        raise ValueError(f"integrand dimension {y.dim} is not a multiple of {b.dim}")
    return y.dim // b.dim


def ito_integral(y: GridPath, b: GridPath) -> GridPath:
    """Cumulative left-point sums ``sum_k y_k db_k``."""
    n = _shape(y, b)
    ym = y.values[:-1].reshape(-1, n, b.dim)
    out = np.zeros((b.n_steps + 1, n))
    np.cumsum(np.einsum("kab,kb->ka", ym, b.increments), axis=0, out=out[1:])
    return GridPath(b.grid, out)


def cross_variation(y: GridPath, b: GridPath) -> CrossVariationPath:
    """Cumulative ``sum_k dy_k (x) db_k``, shape ``(N+1, y.dim, b.dim)``."""
    if not y.grid.same_as(b.grid):
        raise ValueError("grid mismatch between integrand and integrator")
    out = np.zeros((b.n_steps + 1, y.dim, b.dim))
    np.cumsum(y.increments[:, :, None] * b.increments[:, None, :], axis=0, out=out[1:])
    return CrossVariationPath(b.grid, out)


def _correction(cv: CrossVariationPath, n: int, d: int) -> np.ndarray:
    # sum_i <Y^{a,i}, B^i>
    return np.einsum("kaii->ka", cv.values.reshape(-1, n, d, d))


def stratonovich_integral(y: GridPath, b: GridPath) -> GridPath:
    """``int y o db = int y db + 1/2 <y, b>`` on the base grid."""
    n = _shape(y, b)
    ito = ito_integral(y, b).values
    return GridPath(b.grid, ito + 0.5 * _correction(cross_variation(y, b), n, b.dim))


def midpoint_sum(y: GridPath, b: GridPath, part: Partition) -> np.ndarray:
    """``sum (y_u + y_v)/2 . b_{u,v}`` over a partition."""
    n = _shape(y, b)
    idx = part.indices
    ym = 0.5 * (y.values[idx[:-1]] + y.values[idx[1:]]).reshape(-1, n, b.dim)
    db = b.values[idx[1:]] - b.values[idx[:-1]]
    return np.einsum("kab,kb->a", ym, db)


def partition_cross_variation(y: GridPath, b: GridPath, part: Partition) -> np.ndarray:
    """``sum y_{u,v} (x) b_{u,v}`` over a partition, shape ``(y.dim, b.dim)``."""
    idx = part.indices
    dy = y.values[idx[1:]] - y.values[idx[:-1]]
    db = b.values[idx[1:]] - b.values[idx[:-1]]
    return dy.T @ db


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    moduli: np.ndarray
    gaps: np.ndarray
    reference: np.ndarray
    fitted_order: float
    exact: bool
    notes: list[str] = field(default_factory=list)


def midpoint_convergence(y: GridPath, b: GridPath,
                         partitions: Sequence[Partition] | None = None,
                         exact_tol: float = 1e-12) -> ConvergenceReport:
    """Gap between coarse midpoint sums and the base-grid Stratonovich value.

    ``exact`` is set when every gap is below ``exact_tol``; the fitted order is
    then undefined (nan).
    """
    parts = list(partitions) if partitions is not None else dyadic_partitions(b.n_steps)
    ref = stratonovich_integral(y, b).values[-1]
    gaps = np.array([np.linalg.norm(midpoint_sum(y, b, p) - ref) for p in parts])
    mods = np.array([p.modulus(b.grid) for p in parts])
    scale = max(1.0, float(np.linalg.norm(ref)))
    exact = bool(np.all(gaps <= exact_tol * scale))
    order = float("nan") if exact else fit_order(mods, gaps, floor=exact_tol * scale)
    notes = ["all gaps at rounding level; order undefined"] if exact else []
    return ConvergenceReport(mods, gaps, ref, order, exact, notes)


def cross_variation_decay(y: GridPath, b: GridPath,
                          partitions: Sequence[Partition] | None = None) -> ConvergenceReport:
    """Size of coarse-partition cross variation sums against partition modulus."""
    parts = list(partitions) if partitions is not None else dyadic_partitions(b.n_steps)
    vals = np.array([np.linalg.norm(partition_cross_variation(y, b, p)) for p in parts])
    mods = np.array([p.modulus(b.grid) for p in parts])
    return ConvergenceReport(mods, vals, np.zeros(1), fit_order(mods, vals, floor=0.0),
                             bool(np.all(vals == 0)))


def _eval(h, t: np.ndarray, bv: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if h is None:
        return np.zeros(shape)
    v = np.asarray(h(t, bv), dtype=np.float64)
    if v.size == np.prod(shape):
        return v.reshape(shape)
    return np.broadcast_to(v, shape).copy()


def ito_process(b: GridPath, beta=None, drift=None, gamma=None, xi=0.0,
                n: int | None = None) -> GridPath:
    """``X = xi + int beta dB + int drift dt + int gamma : d<B>`` with left-point sums.

    Handles are called as ``h(t, b)`` on whole arrays.  Shapes per time point:
    ``beta`` ``(n, d)``, ``drift`` ``(n,)``, ``gamma`` ``(n, d, d)``.
    """
    d = b.dim
    x0 = np.atleast_1d(np.asarray(xi, dtype=np.float64))
    n = n or x0.size
    n1 = b.n_steps + 1
    t = b.grid.times
    bet = _eval(beta, t, b.values, (n1, n, d))
    dri = _eval(drift, t, b.values, (n1, n))
    gam = _eval(gamma, t, b.values, (n1, n, d, d))
    dqv = np.diff(quadratic_variation(b).qv, axis=0)
    incr = (np.einsum("kab,kb->ka", bet[:-1], b.increments)
            + dri[:-1] * b.grid.step
            + np.einsum("kaij,kij->ka", gam[:-1], dqv))
    out = np.empty((n1, n))
    out[0] = np.broadcast_to(x0, (n,))
    np.cumsum(incr, axis=0, out=out[1:])
    out[1:] += out[0]
    return GridPath(b.grid, out)


def ito_formula_residual(phi: Callable[[np.ndarray], np.ndarray],
                         dphi: Callable[[np.ndarray], np.ndarray],
                         d2phi: Callable[[np.ndarray], np.ndarray],
                         b: GridPath, beta=None, drift=None, gamma=None, xi=0.0) -> float:
    """Max over t of the discrete G-Itô formula residual along ``b``.

    ``X`` is built with :func:`ito_process`; ``phi`` maps ``(N+1, n)`` to
    ``(N+1,)``, ``dphi`` to ``(N+1, n)`` and ``d2phi`` to ``(N+1, n, n)``.
    With no ``beta`` given, ``X = xi + B`` (beta the identity).
    """
    d = b.dim
    x0 = np.atleast_1d(np.asarray(xi, dtype=np.float64))
    if beta is None:
        if x0.size == 1 and d > 1:
            x0 = np.full(d, x0[0])
        n = x0.size
        if n != d:
            raise ValueError("default beta = identity needs xi of dimension d")
        beta = lambda t, bv: np.broadcast_to(np.eye(d), (len(t), d, d))
    n = x0.size
    n1 = b.n_steps + 1
    t = b.grid.times
    x = ito_process(b, beta, drift, gamma, x0, n).values
    bet = _eval(beta, t, b.values, (n1, n, d))
    dri = _eval(drift, t, b.values, (n1, n))
    gam = _eval(gamma, t, b.values, (n1, n, d, d))
    p = np.asarray(phi(x), dtype=np.float64).reshape(n1)
    dp = np.asarray(dphi(x), dtype=np.float64).reshape(n1, n)
    d2p = np.asarray(d2phi(x), dtype=np.float64).reshape(n1, n, n)
    dqv = np.diff(quadratic_variation(b).qv, axis=0)
    db = b.increments
    k = slice(None, -1)
    dB_term = np.einsum("kv,kvj,kj->k", dp[k], bet[k], db)
    dt_term = np.einsum("kv,kv->k", dp[k], dri[k]) * b.grid.step
    qv_coef = (np.einsum("kv,kvij->kij", dp[k], gam[k])
               + 0.5 * np.einsum("kmv,kmi,kvj->kij", d2p[k], bet[k], bet[k]))
    qv_term = np.einsum("kij,kij->k", qv_coef, dqv)
    rhs = np.concatenate([[0.0], np.cumsum(dB_term + dt_term + qv_term)])
    resid = (p - p[0]) - rhs
    return float(np.max(np.abs(resid)))
