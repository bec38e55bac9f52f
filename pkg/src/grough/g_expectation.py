"""Sublinear expectation of ``phi(B_t)`` by PDE and by Monte-Carlo over controls.

The reference value comes from an explicit, monotone finite-difference
scheme for ``u_t = G(u_xx)``, ``u(0, .) = phi``.  The Monte-Carlo route takes
the maximum of ordinary expectations over a finite family of control laws;
since the family is only a subset of all admissible controls, that maximum
is a lower bound for the sublinear expectation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .gbm_sim import (
    ControlPath,
    VolatilityBand,
    constant_control,
    sample_control,
    simulate_ensemble,
)
from .rough_core import TimeGrid

Payoff = Callable[[np.ndarray], np.ndarray]

CI_Z = 1.96


def g_function(a, band: VolatilityBand):
    """``G(a) = 1/2 sup_gamma tr(a gamma gamma')``.

    For d == 1 this is ``(sigma_high^2 a^+ - sigma_low^2 a^-) / 2`` and works
    elementwise on arrays.
    """
    a = np.asarray(a, dtype=np.float64)
    if band.dim == 1 and a.shape[-2:] != (1, 1):
        return 0.5 * (band.sigma_high ** 2 * np.maximum(a, 0.0)
                      - band.sigma_low ** 2 * np.maximum(-a, 0.0))
    if a.shape[-2:] != (band.dim, band.dim):
        raise ValueError(f"G expects {band.dim}x{band.dim} matrices")
    if not np.allclose(a, np.swapaxes(a, -1, -2), rtol=0, atol=1e-12):
        raise ValueError("G is defined on symmetric matrices only")
    if band.dim == 1:
        return g_function(a[..., 0, 0], band)
    gam = band.admissible()
    gg = np.einsum("mij,mkj->mik", gam, gam)
    return 0.5 * np.max(np.einsum("...ij,mji->...m", a, gg), axis=-1)


@dataclass(frozen=True, eq=False)
class GHeatProblem:
    """Explicit scheme setup on ``[-L, L]`` with Dirichlet data ``phi(+-L)``.

    ``L`` defaults to ``8 sigma_high sqrt(t_final)`` and ``dt`` to half the
    stability limit ``dx^2 / sigma_high^2``; ``dt`` is then shrunk slightly so
    that a whole number of steps lands on ``t_final``.
    """

    phi: Payoff
    band: VolatilityBand
    t_final: float = 1.0
    L: float | None = None
    nx: int = 801
    dt: float | None = None

    def __post_init__(self):
        if self.band.dim != 1:
            raise ValueError("the PDE route supports d = 1 only; use Monte-Carlo for d > 1")
        if self.t_final <= 0:
            raise ValueError("t_final must be positive")
        if self.nx < 3:
            raise ValueError("need at least 3 space points")
        L = self.L if self.L is not None else 8.0 * self.band.sigma_high * np.sqrt(self.t_final)
        object.__setattr__(self, "L", float(L))
        dt = self.dt if self.dt is not None else 0.5 * self.cfl_limit
        if dt > self.cfl_limit * (1 + 1e-12):
            raise ValueError(
                f"unstable configuration: dt={dt:g} exceeds dx^2/sigma_high^2={self.cfl_limit:g}")
        n_t = int(np.ceil(self.t_final / dt - 1e-9))
        object.__setattr__(self, "dt", self.t_final / n_t)

    @property
    def dx(self) -> float:
        return 2.0 * self.L / (self.nx - 1)

    @property
    def cfl_limit(self) -> float:
        return self.dx ** 2 / self.band.sigma_high ** 2

    @property
    def n_time_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.nx)


@dataclass(frozen=True, eq=False)
class GHeatSolution:
    x: np.ndarray
    u: np.ndarray
    value: float
    problem: GHeatProblem


def g_heat_steps(u0: np.ndarray, band: VolatilityBand, dx: float, dt: float,
                 n_steps: int) -> np.ndarray:
    """Advance ``u`` along its last axis; the two end values stay fixed."""
    u = np.array(u0, dtype=np.float64, copy=True)
    lam = dt / dx ** 2
    hi, lo = 0.5 * band.sigma_high ** 2 * lam, 0.5 * band.sigma_low ** 2 * lam
    for _ in range(n_steps):
        d2 = u[..., 2:] - 2.0 * u[..., 1:-1] + u[..., :-2]
        u[..., 1:-1] += np.where(d2 > 0, hi * d2, lo * d2)
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("non-finite values in G-heat stepping")
    return u


def solve_g_heat(problem: GHeatProblem) -> GHeatSolution:
    x = problem.x
    u0 = np.asarray(problem.phi(x), dtype=np.float64)
    if u0.shape != x.shape or not np.all(np.isfinite(u0)):
        raise ValueError("phi must return finite values of the same shape as its input")
    u = g_heat_steps(u0, problem.band, problem.dx, problem.dt, problem.n_time_steps)
    return GHeatSolution(x, u, float(np.interp(0.0, x, u)), problem)


@dataclass(frozen=True, eq=False)
class ExpectationEstimate:
    value: float
    ci_halfwidth: float
    method: Literal["pde", "mc_sup", "pde_nested"]
    diagnostics: dict = field(default_factory=dict)


def pde_expectation(phi: Payoff, band: VolatilityBand, t: float = 1.0, nx: int = 801,
                    dt: float | None = None, L: float | None = None) -> ExpectationEstimate:
    prob = GHeatProblem(phi, band, t, L, nx, dt)
    sol = solve_g_heat(prob)
    return ExpectationEstimate(sol.value, 0.0, "pde", {
        "nx": nx, "dx": prob.dx, "dt": prob.dt, "L": prob.L,
        "time_steps": prob.n_time_steps})


def second_difference_indicator(phi: Payoff, h: float = 1e-3):
    """Convexity indicator ``phi''(x)`` by central differences, for bang-bang feedback."""
    def ind(t, x):
        x = np.asarray(x, dtype=np.float64)[:, 0]
        return (phi(x + h) - 2.0 * phi(x) + phi(x - h)) / h ** 2
    return ind


def constant_family(band: VolatilityBand, grid: TimeGrid) -> list[ControlPath]:
    return [constant_control(band, grid, a) for a in band.admissible()]


def bang_bang_family(band: VolatilityBand, grid: TimeGrid,
                     phi: Payoff | None = None) -> list[ControlPath]:
    """Extreme constant controls plus, given ``phi``, feedback on the sign of ``phi''``."""
    if band.dim == 1:
        fam = [constant_control(band, grid, band.sigma_low),
               constant_control(band, grid, band.sigma_high)]
    else:
        fam = constant_family(band, grid)
    if phi is not None and band.dim == 1:
        fam.append(sample_control(band, "feedback_bang_bang", 0, grid,
                                  indicator=second_difference_indicator(phi)))
    return fam


def _terminal_values(control: ControlPath, n_paths: int, seed: int) -> np.ndarray:
    out = []
    for _, b in simulate_ensemble(control.band, control.grid, n_paths, seed,
                                  control=control, chunk=2048):
        out.append(b[:, -1, :])
    x = np.concatenate(out)
    return x[:, 0] if control.band.dim == 1 else x


def mc_upper_expectation(phi: Payoff, band: VolatilityBand,
                         control_family: Sequence[ControlPath], n_paths: int,
                         seed: int) -> ExpectationEstimate:
    """Max over the family of Monte-Carlo means of ``phi(B_T)``, common random numbers.

    A lower bound for the sublinear expectation; the confidence half-width is
    that of the maximising member (normal approximation, 95 %).
    """
    if len(control_family) == 0:
        raise ValueError("control family is empty")
    if n_paths < 100:
        raise ValueError("insufficient sample: need at least 100 paths")
    means, halfs, kinds = [], [], []
    for ctrl in control_family:
        v = np.asarray(phi(_terminal_values(ctrl, n_paths, seed)), dtype=np.float64)
        means.append(float(v.mean()))
        halfs.append(float(CI_Z * v.std(ddof=1) / np.sqrt(n_paths)))
        kinds.append(ctrl.kind)
    best = int(np.argmax(means))
    return ExpectationEstimate(means[best], halfs[best], "mc_sup", {
        "member_means": means, "member_ci": halfs, "member_kinds": kinds,
        "argmax": best, "n_paths": n_paths, "seed": seed,
        "bound": "lower bound over the restricted control family",
        "multi_dimensional": band.dim > 1})


def upper_expectation(phi: Payoff, band: VolatilityBand, method: str = "pde",
                      t: float = 1.0, **kw) -> ExpectationEstimate:
    if method == "pde":
        return pde_expectation(phi, band, t, **kw)
    if method == "mc":
        n_steps = kw.pop("n_steps", 64)
        grid = TimeGrid(t, n_steps)
        family = kw.pop("control_family", None) or bang_bang_family(band, grid, phi)
        return mc_upper_expectation(phi, band, family, kw.pop("n_paths", 10_000),
                                    kw.pop("seed", 0))
    raise ValueError(f"unknown method {method!r}")


def lower_expectation(phi: Payoff, band: VolatilityBand, method: str = "pde",
                      t: float = 1.0, **kw) -> ExpectationEstimate:
    """``-E[-phi]``, by either route."""
    neg = upper_expectation(lambda x: -np.asarray(phi(x)), band, method, t, **kw)
    return ExpectationEstimate(-neg.value, neg.ci_halfwidth, neg.method,
                               dict(neg.diagnostics, lower=True))


def multi_time_expectation(phi2: Callable[[np.ndarray, np.ndarray], np.ndarray],
                           band: VolatilityBand, t1: float, t2: float, nx: int = 401,
                           n_lattice: int = 201, lattice_tol: float = 1e-3,
                           ) -> ExpectationEstimate:
    """``E[phi2(B_{t1}, B_{t2} - B_{t1})]`` by two nested G-heat solves.

    The inner solve over ``[0, t2 - t1]`` is run for every first argument on
    a lattice covering the outer domain; the outer solve over ``[0, t1]``
    starts from the linear interpolation of those values.  ``phi2`` must
    broadcast over array arguments.
    """
    if not 0 < t1 < t2:
        raise ValueError("need 0 < t1 < t2")
    outer = GHeatProblem(lambda x: x, band, t1, nx=nx)
    lattice = np.linspace(-outer.L, outer.L, n_lattice)
    inner = GHeatProblem(lambda y: y, band, t2 - t1, nx=nx)
    y = inner.x
    u0 = np.asarray(phi2(lattice[:, None], y[None, :]), dtype=np.float64)
    u0 = np.broadcast_to(u0, (n_lattice, nx)).copy()
    u_in = g_heat_steps(u0, band, inner.dx, inner.dt, inner.n_time_steps)
    psi = np.array([np.interp(0.0, y, row) for row in u_in])
    # linear interpolation error on the lattice is about |second difference| / 8
    interp_err = float(np.abs(np.diff(psi, 2)).max()) / 8 if n_lattice > 2 else 0.0
    scale = max(1.0, float(np.abs(psi).max()))
    diag = {"nx": nx, "n_lattice": n_lattice, "outer_dt": outer.dt, "inner_dt": inner.dt,
            "lattice_spacing": float(lattice[1] - lattice[0]),
            "interpolation_error": interp_err, "warnings": []}
    if interp_err > lattice_tol * scale:
        msg = (f"lattice too coarse: estimated interpolation error {interp_err:.3g} "
               f"exceeds {lattice_tol:g} x {scale:.3g}; refine n_lattice")
        diag["warnings"].append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    x = outer.x
    u_out = g_heat_steps(np.interp(x, lattice, psi), band, outer.dx, outer.dt,
                         outer.n_time_steps)
    return ExpectationEstimate(float(np.interp(0.0, x, u_out)), 0.0, "pde_nested", diag)
