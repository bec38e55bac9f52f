"""Hölder roughness of sampled paths, tail experiments and the Norris-lemma diagnostic.

The roughness modulus ``L_theta`` is an infimum over directions, times and
scales and cannot be computed exactly from grid data.  Two grid quantities
are reported instead:

* ``L_theta_lower = 1/2 (2T)^-theta D_theta`` where ``D_theta`` is the dyadic
  block statistic; this is the lower bound produced by the dyadic covering
  argument, restricted to depths ``1..n_max``.
* a direct grid evaluation of the inf-sup over scales
  ``eps in [T 2^-n_max, eps0]``, which always dominates the lower bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .gbm_sim import VolatilityBand, constant_control, simulate_ensemble
from .rough_core import (
    ControlledPath,
    GridPath,
    RoughPath,
    TimeGrid,
    controlled_seminorm,
    hoelder_sup,
    rough_path_seminorm,
)
from .rough_integral import running_integral

DEFAULT_MESH = {2: 64, 3: 256}


def direction_mesh(dim: int, size: int | None = None, seed: int = 0) -> np.ndarray:
    """Unit directions, shape ``(m, dim)``, covering the sphere up to sign.

    ``a`` and ``-a`` give the same block ranges, so only a half sphere is
    needed: ``{1}`` for d = 1, equally spaced angles in ``[0, pi)`` for d = 2,
    a Fibonacci lattice on the upper hemisphere for d = 3 and seeded Gaussian
    directions beyond.
    """
    if dim == 1:
        return np.ones((1, 1))
    m = size or DEFAULT_MESH.get(dim, 64 * dim)
    if dim == 2:
        ang = np.pi * np.arange(m) / m
        return np.column_stack([np.cos(ang), np.sin(ang)])
    if dim == 3:
        k = np.arange(m) + 0.5
        z = k / m
        r = np.sqrt(1 - z ** 2)
        phi = np.pi * (1 + np.sqrt(5)) * k
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    g = np.random.default_rng(seed).standard_normal((m, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _as_mesh(dim: int, mesh) -> np.ndarray:
    if mesh is None or np.isscalar(mesh):
        return direction_mesh(dim, None if mesh is None else int(mesh))
    a = np.asarray(mesh, dtype=np.float64).reshape(-1, dim)
    return a / np.linalg.norm(a, axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class RoughnessReport:
    theta: float
    n_max: int
    D_theta: float
    L_theta_lower: float
    per_level_minima: np.ndarray  # entry n-1 is the level-n minimum
    n_directions: int = 1
    notes: list[str] = field(default_factory=list)


def block_ranges(p: np.ndarray, n_max: int) -> list[np.ndarray]:
    """Ranges ``max - min`` of ``p`` over closed dyadic blocks, levels 1..n_max.

    ``p`` has shape ``(N + 1, m)``; level ``n`` yields an array ``(2^n, m)``.
    """
    n = p.shape[0] - 1
    width = n // 2 ** n_max
    body = p[:-1].reshape(2 ** n_max, width, -1)
    ends = p[width::width]
    hi = np.maximum(body.max(axis=1), ends)
    lo = np.minimum(body.min(axis=1), ends)
    out = [hi - lo]
    for _ in range(n_max - 1):
        hi = np.maximum(hi[0::2], hi[1::2])
        lo = np.minimum(lo[0::2], lo[1::2])
        out.append(hi - lo)
    return out[::-1]


def _check_depth(n_steps: int, n_max: int) -> None:
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    if 2 ** n_max > n_steps or n_steps % 2 ** n_max:
        raise ValueError(
            f"n_max too deep for the grid: 2^{n_max} must divide n_steps={n_steps}")


def dyadic_roughness(path: GridPath, theta: float, n_max: int, mesh=None) -> RoughnessReport:
    """Dyadic block statistic ``D_theta`` and the implied lower bound on ``L_theta``.

    ``D_theta = min_{n <= n_max, k, a} 2^(theta n) sup_{s,t in block(n,k)} |a . X_{s,t}|``
    with blocks ``[k T 2^-n, (k+1) T 2^-n]``.

    Parameters
    ----------
    path : GridPath
        Sampled path; ``2^n_max`` must divide its number of steps.
    theta : float
        Roughness exponent in ``(0, 1)``.
    n_max : int
        Deepest dyadic level.
    mesh : int or array_like, optional
        Number of directions, or the directions themselves.  Defaults to
        :func:`direction_mesh`.
    """
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    _check_depth(path.n_steps, n_max)
    a = _as_mesh(path.dim, mesh)
    levels = block_ranges(path.values @ a.T, n_max)
    minima = np.array([2.0 ** (theta * (n + 1)) * r.min() for n, r in enumerate(levels)])
    d = float(minima.min())
    lower = 0.5 * (2 * path.grid.T) ** (-theta) * d
    notes = [] if path.dim == 1 else [
        f"finite mesh of {len(a)} directions; the infimum over the sphere may be smaller"]
    return RoughnessReport(theta, n_max, d, lower, minima, len(a), notes)


def direct_roughness_estimate(path: GridPath, theta: float, n_max: int,
                              eps0: float | None = None, mesh=None) -> float:
    """Grid inf-sup ``min_{s, a, eps} sup_{|t-s|<=eps} |a . X_{s,t}| / eps^theta``.

    Scales run over ``[T 2^-n_max, eps0]`` (``eps0`` defaults to ``T/2``) and
    ``s``, ``t`` over grid points.  Cost is O(N * eps0/dt) per direction.
    """
    _check_depth(path.n_steps, n_max)
    grid = path.grid
    eps0 = grid.T / 2 if eps0 is None else float(eps0)
    dt = grid.step
    m_lo = path.n_steps // 2 ** n_max
    m_hi = int(np.floor(eps0 / dt + 1e-9))
    if m_hi < m_lo:
        raise ValueError("eps0 is below the finest dyadic scale")
    p = path.values @ _as_mesh(path.dim, mesh).T
    n1 = p.shape[0]
    hi, lo = p.copy(), p.copy()
    best = np.inf
    for m in range(1, m_hi + 1):
        # widen windows [s-m, s+m] by one point on each side
        hi[m:] = np.maximum(hi[m:], p[:-m])
        lo[m:] = np.minimum(lo[m:], p[:-m])
        if m < n1:
            hi[:-m] = np.maximum(hi[:-m], p[m:])
            lo[:-m] = np.minimum(lo[:-m], p[m:])
        if m >= m_lo:
            s = np.maximum(hi - p, p - lo).min()
            best = min(best, float(s) / min((m + 1) * dt, eps0) ** theta)
    return best


def _check_eps(eps_grid) -> np.ndarray:
    eps = np.asarray(eps_grid, dtype=np.float64).ravel()
    if eps.size == 0:
        raise ValueError("empty eps_grid")
    if np.any(eps <= 0):
        raise ValueError("eps values must be positive")
    return eps


def _law_paths(band: VolatilityBand, grid: TimeGrid, n_seeds: int, seed: int):
    """Paths per constant control law on the lattice (same noise across laws)."""
    for a in band.admissible():
        ctrl = constant_control(band, grid, a)
        bs = [b for _, b in simulate_ensemble(band, grid, n_seeds, seed, control=ctrl, chunk=64)]
        yield a, np.concatenate(bs)


@dataclass(frozen=True, eq=False)
class TailTable:
    eps: np.ndarray
    frequency: np.ndarray
    per_law: np.ndarray  # (n_laws, n_eps)
    laws: list
    slope: float
    intercept: float
    r2: float
    n_usable: int
    samples: np.ndarray  # L_theta_lower per law and seed


def roughness_tail_experiment(band: VolatilityBand, theta: float, eps_grid: Sequence[float],
                              n_seeds: int, grid: TimeGrid | None = None,
                              n_max: int | None = None, seed: int = 0) -> TailTable:
    """Empirical capacity of ``{L_theta_lower < eps}`` and its ``eps^-2`` profile.

    The capacity is replaced by the maximum over the constant control laws
    on the band lattice, a lower bound for it.  ``log frequency`` is
    regressed on ``eps^-2`` over the points with ``0 < frequency < 1``.
    """
    grid = grid or TimeGrid(1.0, 2 ** 14)
    n_max = n_max if n_max is not None else min(10, int(np.log2(grid.n_steps)) - 4)
    eps = _check_eps(eps_grid)
    lim = 1.0 / (2 * grid.T ** theta)
    if np.any(eps >= lim):
        raise ValueError(f"eps values must lie in (0, {lim:g})")
    laws, samples = [], []
    for a, bs in _law_paths(band, grid, n_seeds, seed):
        laws.append(np.asarray(a).tolist())
        samples.append([dyadic_roughness(GridPath(grid, b), theta, n_max).L_theta_lower
                        for b in bs])
    samples = np.array(samples)
    per_law = (samples[:, :, None] < eps[None, None, :]).mean(axis=1)
    freq = per_law.max(axis=0)
    keep = (freq > 0) & (freq < 1)
    slope = icpt = r2 = float("nan")
    if np.count_nonzero(keep) >= 3:
        fit = stats.linregress(eps[keep] ** -2.0, np.log(freq[keep]))
        slope, icpt, r2 = float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2)
    return TailTable(eps, freq, per_law, laws, slope, icpt, r2, int(keep.sum()), samples)


@dataclass(frozen=True, eq=False)
class ExponentialTailTable:
    eps: np.ndarray
    per_law: np.ndarray  # frequency of sup|B| >= 1/eps, (n_laws, n_eps)
    ci_halfwidth: np.ndarray
    bound: np.ndarray
    reference_bound: np.ndarray
    violations: np.ndarray  # bool, (n_laws, n_eps)
    laws: list
    n_seeds: int

    @property
    def passed(self) -> bool:
        return not bool(self.violations.any())


def exponential_tail_check(band: VolatilityBand, eps_grid: Sequence[float], n_seeds: int,
                           grid: TimeGrid | None = None, seed: int = 0) -> ExponentialTailTable:
    """Compare ``P(sup|B| >= 1/eps)`` per law with ``d exp(-1/(eps^2 d T s^2))``.

    Every law in the band lattice is checked on its own; a law violates the
    bound at ``eps`` when its frequency exceeds the bound by more than three
    95 % binomial half-widths.  The column ``reference_bound`` holds
    ``2d exp(-1/(2 eps^2 d T s^2))``, which the reflection principle and a
    union bound over coordinates guarantee.
    """
    grid = grid or TimeGrid(1.0, 2 ** 12)
    eps = _check_eps(eps_grid)
    d, s2 = band.dim, band.sigma_high ** 2
    with np.errstate(over="ignore"):
        bound = d * np.exp(-1.0 / (eps ** 2 * d * grid.T * s2))
        ref = 2 * d * np.exp(-1.0 / (2 * eps ** 2 * d * grid.T * s2))
    laws, freqs = [], []
    for a, bs in _law_paths(band, grid, n_seeds, seed):
        laws.append(np.asarray(a).tolist())
        sup = np.linalg.norm(bs, axis=-1).max(axis=1)
        freqs.append((sup[:, None] >= 1.0 / eps[None, :]).mean(axis=0))
    freqs = np.array(freqs)
    half = 1.96 * np.sqrt(freqs * (1 - freqs) / n_seeds)
    viol = freqs > bound[None, :] + 3 * half
    return ExponentialTailTable(eps, freqs, half, bound, ref, viol, laws, n_seeds)


@dataclass(frozen=True, eq=False)
class NorrisReport:
    sup_norm_I: float
    sup_norm_Y: float
    sup_norm_Z: float
    R_quantity: float
    L_theta_lower: float
    theta: float
    alpha: float
    components: dict = field(default_factory=dict)
    I: np.ndarray | None = None


@dataclass(frozen=True)
class ScalingFit:
    log_M: float
    q: float
    r: float
    r2: float
    n_points: int


def drift_integral(Z: GridPath) -> np.ndarray:
    out = np.zeros_like(Z.values)
    np.cumsum(Z.values[:-1] * Z.grid.step, axis=0, out=out[1:])
    return out


def norris_integral(Y: ControlledPath, Z: GridPath, rp: RoughPath) -> np.ndarray:
    """``I_t = int_0^t Y dX + int_0^t Z dt`` on the base grid, shape ``(N+1, n)``."""
    if not Z.grid.same_as(rp.grid):
        raise ValueError("grid mismatch between Z and the rough path")
    if Z.dim != Y.out_dim:
        raise ValueError(f"dimension mismatch: Z has dimension {Z.dim}, Y has {Y.out_dim} rows")
    return running_integral(Y, rp) + drift_integral(Z)


def _sup(v: np.ndarray) -> float:
    v = np.asarray(v)
    return float(np.max(np.linalg.norm(v.reshape(v.shape[0], -1), axis=1)))


def _default_depth(n_steps: int) -> int:
    n = 0
    while n_steps % 2 ** (n + 1) == 0 and 2 ** (n + 1) <= n_steps // 16:
        n += 1
    return max(1, min(10, n))


def norris_diagnostic(Y: ControlledPath, Z: GridPath, rp: RoughPath, theta: float,
                      alpha: float, n_max: int | None = None, mesh=None,
                      roughness: RoughnessReport | None = None,
                      rough_norm: float | None = None) -> NorrisReport:
    """Sup norms of ``I``, ``Y`` and ``Z`` together with the quantity ``R``.

    ``R = 1 + 1/L + |||X|||_alpha + ||Y'||_alpha + ||R^Y||_{2 alpha} + |Y_0|
    + |Y'_0| + ||Z||_alpha`` with ``L`` the dyadic lower bound of the
    roughness modulus, which can only overstate ``R``.  ``R`` is infinite when
    that bound is zero.  ``roughness`` and ``rough_norm`` (the rough path
    semi-norm) may be passed in to reuse them across a family of integrands.
    """
    if theta >= 2 * alpha:
        raise ValueError(f"hypothesis violated: theta={theta} must be below 2*alpha={2 * alpha}")
    I = norris_integral(Y, Z, rp)
    if roughness is None:
        roughness = dyadic_roughness(rp.path, theta, n_max or _default_depth(rp.grid.n_steps), mesh)
    L = roughness.L_theta_lower
    comp = {
        "inv_L": float("inf") if L <= 0 else 1.0 / L,
        "rough_path": rough_path_seminorm(rp, alpha) if rough_norm is None else rough_norm,
        "controlled": controlled_seminorm(Y, alpha),
        "Y0": float(np.linalg.norm(Y.y[0])),
        "Yprime0": float(np.linalg.norm(Y.y_prime[0])),
        "Z_hoelder": hoelder_sup(Z.values, Z.grid, alpha),
    }
    R = 1.0 + sum(comp.values())
    return NorrisReport(_sup(I), _sup(Y.y), _sup(Z.values), R, L, theta, alpha, comp, I)


def scaling_family(Y: ControlledPath, Z: GridPath,
                   lambdas: Sequence[float] = (1.0, 1e-1, 1e-2, 1e-3, 1e-4)):
    return [(Y.scaled(lam), Z.scaled(lam)) for lam in lambdas]


def norris_scaling_fit(reports: Sequence[NorrisReport]) -> ScalingFit:
    """Fit ``log(|Y| + |Z|) = log M + q log R + r log |I|`` in two stages.

    ``r`` and its R^2 come from regressing on ``log |I|`` alone; ``q`` is the
    slope of the residuals on ``log R`` (zero when ``R`` does not vary).
    These are calibration values, not constants with a proven meaning.
    """
    rows = [(np.log(r.sup_norm_Y + r.sup_norm_Z), np.log(r.sup_norm_I), np.log(r.R_quantity))
            for r in reports
            if r.sup_norm_I > 0 and r.sup_norm_Y + r.sup_norm_Z > 0 and np.isfinite(r.R_quantity)]
    if len(rows) < 3:
        raise ValueError("underdetermined regression: need at least 3 usable scaling points")
    y, li, lr = map(np.array, zip(*rows))
    fit = stats.linregress(li, y)
    resid = y - (fit.intercept + fit.slope * li)
    q, log_m = 0.0, float(fit.intercept)
    if np.ptp(lr) > 1e-9:
        f2 = stats.linregress(lr, resid)
        q, log_m = float(f2.slope), log_m + float(f2.intercept)
    return ScalingFit(log_m, q, float(fit.slope), float(fit.rvalue ** 2), len(rows))


@dataclass(frozen=True)
class UniquenessReport:
    status: str  # PASS, FAIL or INCONCLUSIVE
    deviation: float
    integral_gap: float
    tolerance: float
    R_quantity: float
    fit: ScalingFit


def uniqueness_check(Y1: ControlledPath, Z1: GridPath, Y2: ControlledPath, Z2: GridPath,
                     rp: RoughPath, theta: float = 0.55, alpha: float = 0.45,
                     tol_I: float = 1e-4, fit: ScalingFit | None = None,
                     n_max: int | None = None) -> UniquenessReport:
    """Do two integrand pairs with (nearly) equal ``I`` also agree?

    With ``|I1 - I2|_inf <= tol_I`` the pair deviation is compared against
    ``exp(log M) R^q tol_I^r``, ``R`` taken from the difference pair and
    ``(M, q, r)`` from ``fit`` or, by default, from the scaling family of the
    first pair.  A larger integral gap makes the check INCONCLUSIVE.
    """
    if not (Y1.grid.same_as(Y2.grid) and Z1.grid.same_as(Z2.grid)):
        raise ValueError("both pairs must live on the grid of the rough path")
    depth = n_max or _default_depth(rp.grid.n_steps)
    shared = {"roughness": dyadic_roughness(rp.path, theta, depth),
              "rough_norm": rough_path_seminorm(rp, alpha)}
    diff = norris_diagnostic(Y1 - Y2, GridPath(Z1.grid, Z1.values - Z2.values),
                             rp, theta, alpha, **shared)
    if fit is None:
        fit = norris_scaling_fit([norris_diagnostic(y, z, rp, theta, alpha, **shared)
                                  for y, z in scaling_family(Y1, Z1)])
    gap = diff.sup_norm_I
    dev = max(diff.sup_norm_Y, diff.sup_norm_Z)
    tol = float(np.exp(fit.log_M) * diff.R_quantity ** fit.q * tol_I ** fit.r)
    if gap > tol_I:
        status = "INCONCLUSIVE"
    else:
        status = "PASS" if dev <= tol else "FAIL"
    return UniquenessReport(status, dev, gap, tol, diff.R_quantity, fit)
