"""Simulation of G-Brownian motion through its control representation.

A G-Brownian motion with volatility band ``[sigma_low, sigma_high]`` is
simulated law by law: a control ``a`` with values in the admissible set is
fixed (or chosen in feedback form), and ``B = int a dW`` is computed from a
seeded Wiener path.  Sampling "from" the sublinear expectation itself is not
possible; the envelope over laws is taken in :mod:`grough.g_expectation`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Literal, Sequence

import numpy as np
from scipy import stats

from . import rng
from .rough_core import GridPath, LevelTwo, RoughPath, TimeGrid

ControlKind = Literal["constant", "piecewise_constant", "feedback_bang_bang"]
CONTROL_KINDS = ("constant", "piecewise_constant", "feedback_bang_bang")

# indicator(t, x) -> convexity indicator; x has shape (P, d).  Returns shape (P,)
# for d == 1, or (P, d, d) symmetric matrices for d > 1.
Indicator = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class VolatilityBand:
    sigma_low: float
    sigma_high: float
    control_levels: int = 2
    dim: int = 1
    gamma_set: np.ndarray | None = None

    def __post_init__(self):
        if not (0 < self.sigma_low <= self.sigma_high < np.inf):
            raise ValueError("volatility band needs 0 < sigma_low <= sigma_high < inf")
        if self.control_levels < 2:
            raise ValueError("control_levels must be at least 2")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.gamma_set is not None:
            g = np.asarray(self.gamma_set, dtype=np.float64)
            if g.ndim != 3 or g.shape[1:] != (self.dim, self.dim):
                raise ValueError(f"gamma_set must have shape (m, {self.dim}, {self.dim})")
            g.setflags(write=False)
            object.__setattr__(self, "gamma_set", g)

    @classmethod
    def isotropic(cls, sigma_low: float, sigma_high: float, dim: int,
                  control_levels: int = 2) -> "VolatilityBand":
        """Band whose Γ is ``{s * I : s on the lattice}``."""
        lat = np.unique(np.linspace(sigma_low, sigma_high, control_levels))
        gammas = lat[:, None, None] * np.eye(dim)[None]
        return cls(sigma_low, sigma_high, control_levels, dim, gammas)

    @property
    def degenerate(self) -> bool:
        return self.sigma_low == self.sigma_high

    def lattice(self) -> np.ndarray:
        return np.unique(np.linspace(self.sigma_low, self.sigma_high, self.control_levels))

    def admissible(self) -> np.ndarray:
        """Lattice of scalars for d == 1, the Γ matrices for d > 1."""
        if self.dim == 1:
            return self.lattice()
        if self.gamma_set is None or len(self.gamma_set) == 0:
            raise ValueError("empty gamma_set: a d > 1 band needs a finite list of matrices")
        return self.gamma_set

    def as_dict(self) -> dict:
        out = {"sigma_low": self.sigma_low, "sigma_high": self.sigma_high,
               "control_levels": self.control_levels, "dim": self.dim}
        if self.gamma_set is not None:
            out["gamma_set"] = self.gamma_set.tolist()
        return out


@dataclass(frozen=True, eq=False)
class ControlPath:
    grid: TimeGrid
    band: VolatilityBand
    kind: str
    a_values: np.ndarray | None = None
    indicator: Indicator | None = None

    @property
    def is_feedback(self) -> bool:
        return self.a_values is None


@dataclass(frozen=True, eq=False)
class SamplePath:
    b: GridPath
    w: GridPath
    control: ControlPath
    seed: int
    path_index: int = 0


@dataclass(frozen=True, eq=False)
class QuadraticVariationPath:
    grid: TimeGrid
    qv: np.ndarray

    def between(self, i: int, j: int) -> np.ndarray:
        return self.qv[j] - self.qv[i]


def sample_control(band: VolatilityBand, kind: ControlKind, rng_seed: int, grid: TimeGrid,
                   indicator: Indicator | None = None, path_index: int = 0) -> ControlPath:
    """Draw a control of the requested class from the admissible set.

    ``constant`` picks one lattice value for the whole horizon,
    ``piecewise_constant`` picks i.i.d. lattice values per step, and
    ``feedback_bang_bang`` is resolved during simulation from ``indicator``.
    """
    adm = band.admissible()
    if kind == "constant":
        idx = rng.integers(rng_seed, path_index, 1, len(adm))
        a = np.repeat(adm[idx], grid.n_steps, axis=0)
    elif kind == "piecewise_constant":
        a = adm[rng.integers(rng_seed, path_index, grid.n_steps, len(adm))]
    elif kind == "feedback_bang_bang":
        if indicator is None:
            raise ValueError("feedback_bang_bang needs a convexity indicator")
        return ControlPath(grid, band, kind, None, indicator)
    else:
        raise ValueError(f"unknown control kind {kind!r}; expected one of {CONTROL_KINDS}")
    return ControlPath(grid, band, kind, a)


def constant_control(band: VolatilityBand, grid: TimeGrid, value) -> ControlPath:
    v = np.asarray(value, dtype=np.float64)
    a = np.broadcast_to(v, (grid.n_steps,) + v.shape).copy()
    return ControlPath(grid, band, "constant", a)


def _bang_bang_choice(band: VolatilityBand, ind: np.ndarray) -> np.ndarray:
    if band.dim == 1:
        return np.where(np.asarray(ind).reshape(-1) >= 0.0, band.sigma_high, band.sigma_low)
    gam = band.admissible()
    gg = np.einsum("mij,mkj->mik", gam, gam)
    score = np.einsum("pij,mji->pm", np.asarray(ind), gg)
    return gam[np.argmax(score, axis=1)]


def wiener_increments(seed: int, path_indices: Sequence[int], grid: TimeGrid, dim: int) -> np.ndarray:
    """Normal(0, dt I) increments, shape ``(P, N, d)``."""
    n = grid.n_steps * dim
    sq = np.sqrt(grid.step)
    out = np.empty((len(path_indices), grid.n_steps, dim))
    for row, p in enumerate(path_indices):
        out[row] = sq * rng.normals(seed, p, n, rng.WIENER).reshape(grid.n_steps, dim)
    return out


def _drive(controls: Sequence[ControlPath], dw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Integrate ``b = int a dW`` for a batch; returns ``(b, a)``."""
    p, n, d = dw.shape
    band = controls[0].band
    b = np.zeros((p, n + 1, d))
    if controls[0].is_feedback:
        ind = controls[0].indicator
        times = controls[0].grid.times
        a = np.empty((p, n) if d == 1 else (p, n, d, d))
        for k in range(n):
            a[:, k] = _bang_bang_choice(band, ind(times[k], b[:, k]))
            step = a[:, k, None] * dw[:, k] if d == 1 else np.einsum("pij,pj->pi", a[:, k], dw[:, k])
            b[:, k + 1] = b[:, k] + step
        return b, a
    a = np.stack([c.a_values for c in controls])
    incr = a[..., None] * dw if d == 1 else np.einsum("pkij,pkj->pki", a, dw)
    np.cumsum(incr, axis=1, out=b[:, 1:])
    return b, a


def sample_gbm_path(control: ControlPath, rng_seed: int, path_index: int = 0) -> SamplePath:
    """Simulate one path of ``B = int a dW`` with ``B_0 = 0``."""
    grid, d = control.grid, control.band.dim
    dw = wiener_increments(rng_seed, [path_index], grid, d)
    b, a = _drive([control], dw)
    w = np.vstack([np.zeros((1, d)), np.cumsum(dw[0], axis=0)])
    resolved = control if not control.is_feedback else ControlPath(
        grid, control.band, control.kind, a[0], control.indicator)
    return SamplePath(GridPath(grid, b[0]), GridPath(grid, w), resolved, rng_seed, path_index)


def simulate_ensemble(band: VolatilityBand, grid: TimeGrid, n_paths: int, seed: int,
                      kind: ControlKind = "constant", control: ControlPath | None = None,
                      indicator: Indicator | None = None, chunk: int = 256,
                      start: int = 0) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(path_indices, b)`` batches with ``b`` of shape ``(P, N + 1, d)``.

    With ``control`` given, every path uses it (common control, independent
    noise); otherwise each path draws its own control of class ``kind`` from
    its own stream.  Path ``i`` is identical to ``sample_gbm_path`` with
    ``path_index=i``.
    """
    d = band.dim
    for lo in range(start, start + n_paths, chunk):
        idx = np.arange(lo, min(lo + chunk, start + n_paths))
        dw = wiener_increments(seed, idx, grid, d)
        if control is not None and control.is_feedback:
            b, _ = _drive([control], dw)
        elif control is not None:
            b, _ = _drive([control] * len(idx), dw)
        elif kind == "feedback_bang_bang":
            fb = sample_control(band, kind, seed, grid, indicator)
            b, _ = _drive([fb], dw)
        else:
            ctrls = [sample_control(band, kind, seed, grid, path_index=int(i)) for i in idx]
            b, _ = _drive(ctrls, dw)
        yield idx, b


def quadratic_variation(b: GridPath) -> QuadraticVariationPath:
    """Realized covariation ``<B>_{t_k} = sum_{m<k} dB_m (x) dB_m``."""
    db = b.increments
    qv = np.zeros((b.n_steps + 1, b.dim, b.dim))
    np.cumsum(db[:, :, None] * db[:, None, :], axis=0, out=qv[1:])
    return QuadraticVariationPath(b.grid, qv)


def ito_lift(b: GridPath) -> RoughPath:
    """Grid Itô lift: zero sub-step blocks, coarse values are left-point sums."""
    return RoughPath(b, LevelTwo.zeros(b.n_steps, b.dim), "ito")


def stratonovich_lift(rp: RoughPath, qv: QuadraticVariationPath) -> RoughPath:
    """Add half the quadratic-variation increment to every step block."""
    if rp.lift_kind != "ito":
        raise ValueError("stratonovich_lift expects an Itô lift")
    if not rp.grid.same_as(qv.grid):
        raise ValueError("grid mismatch between rough path and quadratic variation")
    blocks = rp.level2.step_blocks + 0.5 * np.diff(qv.qv, axis=0)
    return RoughPath(rp.path, LevelTwo(blocks), "stratonovich")


def windowed_qv_ratios(b: GridPath, window: int) -> np.ndarray:
    """``Δ<B>/Δt`` over consecutive non-overlapping windows of ``window`` steps.

    Returns shape ``(n_windows,)`` for d == 1 and ``(n_windows, d)`` (diagonal
    entries) otherwise.
    """
    if window < 1 or window > b.n_steps:
        raise ValueError("window must lie in [1, n_steps]")
    sq = b.increments ** 2
    nw = b.n_steps // window
    r = sq[: nw * window].reshape(nw, window, b.dim).sum(axis=1) / (window * b.grid.step)
    return r[:, 0] if b.dim == 1 else r


def band_ratio_interval(band: VolatilityBand, window: int) -> tuple[float, float]:
    """Acceptance interval for windowed ratios: ``[s_lo^2 (1 - 5c), s_hi^2 (1 + 5c)]``, ``c = sqrt(2/m)``."""
    c = 5.0 * np.sqrt(2.0 / window)
    return band.sigma_low ** 2 * (1 - c), band.sigma_high ** 2 * (1 + c)


@dataclass(frozen=True)
class MomentScalingReport:
    level: int
    q: int
    lags: np.ndarray
    moments: np.ndarray
    slope: float
    intercept: float
    r2: float
    expected_slope: float


def _level2_lagged(b: np.ndarray, h: int) -> np.ndarray:
    """Itô level-2 over all windows of ``h`` steps for a batch ``(P, N+1, d)``."""
    db = np.diff(b, axis=1)
    c = np.zeros(b.shape + (b.shape[-1],))
    np.cumsum(b[:, :-1, :, None] * db[:, :, None, :], axis=1, out=c[:, 1:])
    xi, xj = b[:, :-h], b[:, h:]
    return (c[:, h:] - c[:, :-h]) - xi[..., :, None] * (xj - xi)[..., None, :]


def moment_scaling_check(band: VolatilityBand, q: int, n_paths: int, lag_set: Sequence[int],
                         level: int = 1, grid: TimeGrid | None = None, seed: int = 0,
                         kind: ControlKind = "piecewise_constant") -> MomentScalingReport:
    """Fit ``log m(tau)`` against ``log tau`` for ``m(tau) = mean |X_{s,s+tau}|^q``.

    Level 1 uses the path increments (expected slope q/2), level 2 the Itô
    iterated integrals (expected slope q).  Means are over paths and all
    window positions.
    """
    if q not in (2, 4, 6):
        raise ValueError("q must be 2, 4 or 6")
    if level not in (1, 2):
        raise ValueError("level must be 1 or 2")
    lags = np.array(sorted(set(int(h) for h in lag_set)))
    if len(lags) < 3:
        raise ValueError("underdetermined regression: need at least 3 distinct lags")
    grid = grid or TimeGrid(1.0, 2 ** 12)
    if lags[0] < 1 or lags[-1] > grid.n_steps:
        raise ValueError("lags must lie within the grid")
    sums = np.zeros(len(lags))
    counts = np.zeros(len(lags))
    for _, b in simulate_ensemble(band, grid, n_paths, seed, kind=kind, chunk=64):
        for m, h in enumerate(lags):
            if level == 1:
                nrm = np.linalg.norm(b[:, h:] - b[:, :-h], axis=-1)
            else:
                x2 = _level2_lagged(b, h)
                nrm = np.linalg.norm(x2.reshape(x2.shape[:2] + (-1,)), axis=-1)
            sums[m] += np.sum(nrm ** q)
            counts[m] += nrm.size
    moments = sums / counts
    fit = stats.linregress(np.log(lags * grid.step), np.log(moments))
    return MomentScalingReport(level, q, lags, moments, float(fit.slope), float(fit.intercept),
                               float(fit.rvalue ** 2), q / 2 if level == 1 else float(q))
