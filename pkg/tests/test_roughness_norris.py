import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from grough.gbm_sim import (
    VolatilityBand,
    ito_lift,
    quadratic_variation,
    sample_control,
    sample_gbm_path,
    stratonovich_lift,
)
from grough.rough_core import ControlledPath, GridPath, TimeGrid
from grough.roughness_norris import (
    direct_roughness_estimate,
    direction_mesh,
    dyadic_roughness,
    exponential_tail_check,
    norris_diagnostic,
    norris_scaling_fit,
    roughness_tail_experiment,
    scaling_family,
    uniqueness_check,
)

BAND = VolatilityBand(0.5, 1.0)


def gbm(n_steps, seed, band=BAND):
    grid = TimeGrid(1.0, n_steps)
    return sample_gbm_path(sample_control(band, "piecewise_constant", seed, grid), seed).b


def identity_pair(rp, lam=1.0):
    """Y = lam (B, Id), Z = lam."""
    n = rp.grid.n_steps + 1
    y = ControlledPath(rp, lam * rp.path.values[:, 0], np.full(n, lam))
    return y, GridPath(rp.grid, np.full(n, lam))


class TestDirections:
    @pytest.mark.parametrize("dim,size", [(1, 1), (2, 64), (3, 256), (5, 320)])
    def test_unit_vectors(self, dim, size):
        a = direction_mesh(dim)
        assert a.shape == (size, dim)
        np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0)


class TestDyadic:
    def test_zero_path(self):
        rep = dyadic_roughness(GridPath(TimeGrid(1.0, 64), np.zeros(65)), 0.55, 4)
        assert rep.D_theta == 0 and rep.L_theta_lower == 0

    def test_linear_path(self):
        g = TimeGrid(1.0, 2 ** 10)
        rep = dyadic_roughness(GridPath(g, g.times), 0.75, 8)
        assert rep.D_theta == pytest.approx(0.25, rel=1e-12)
        assert rep.L_theta_lower == pytest.approx(0.5 * 2 ** -0.75 * 0.25, rel=1e-12)

    def test_too_deep(self):
        with pytest.raises(ValueError, match="n_max too deep"):
            dyadic_roughness(GridPath(TimeGrid(1.0, 16), np.zeros(17)), 0.5, 5)
        with pytest.raises(ValueError, match="n_max too deep"):
            dyadic_roughness(GridPath(TimeGrid(1.0, 24), np.zeros(25)), 0.5, 4)

    @given(st.integers(0, 10_000), st.integers(1, 2), st.floats(0.1, 0.9))
    @settings(max_examples=25, deadline=None)
    def test_matches_bruteforce(self, seed, dim, theta):
        g = TimeGrid(1.0, 16)
        x = np.random.default_rng(seed).normal(size=(17, dim))
        mesh = direction_mesh(dim, 8)
        rep = dyadic_roughness(GridPath(g, x), theta, 3, mesh=mesh)
        assert rep.D_theta == pytest.approx(
            oracles.dyadic_bruteforce(x, g.times, theta, 3, mesh), rel=1e-12)

    def test_monotone_in_depth_and_theta(self):
        b = gbm(2 ** 10, 3)
        ds = [dyadic_roughness(b, 0.55, n).D_theta for n in range(1, 7)]
        assert all(x >= y for x, y in zip(ds, ds[1:]))
        assert dyadic_roughness(b, 0.45, 6).D_theta <= dyadic_roughness(b, 0.55, 6).D_theta

    def test_mesh_refinement(self):
        b = gbm(2 ** 8, 1, VolatilityBand.isotropic(0.5, 1.0, 2))
        coarse = dyadic_roughness(b, 0.55, 4, mesh=direction_mesh(2, 8)).D_theta
        fine = dyadic_roughness(b, 0.55, 4, mesh=direction_mesh(2, 64)).D_theta
        # the 64-angle mesh contains the 8-angle one
        assert fine <= coarse

    def test_positive_on_gbm(self):
        assert all(dyadic_roughness(gbm(2 ** 12, s), 0.55, 8).L_theta_lower > 0 for s in range(20))


class TestDirect:
    @given(st.integers(0, 10_000), st.floats(0.2, 0.9))
    @settings(max_examples=25, deadline=None)
    def test_matches_bruteforce(self, seed, theta):
        g = TimeGrid(1.0, 16)
        x = np.random.default_rng(seed).normal(size=(17, 1))
        got = direct_roughness_estimate(GridPath(g, x), theta, 2)
        want = oracles.direct_roughness_bruteforce(x, g.times, theta, 0.25, 0.5, np.ones(1))
        assert got == pytest.approx(want, rel=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_dominates_lower_bound(self, seed):
        b = gbm(2 ** 10, seed)
        lower = dyadic_roughness(b, 0.55, 6).L_theta_lower
        assert lower <= direct_roughness_estimate(b, 0.55, 6)


class TestTails:
    def test_empty_grid(self):
        with pytest.raises(ValueError, match="empty eps_grid"):
            roughness_tail_experiment(BAND, 0.55, [], 5, grid=TimeGrid(1.0, 2 ** 8))

    def test_eps_range(self):
        with pytest.raises(ValueError):
            roughness_tail_experiment(BAND, 0.55, [0.6], 5, grid=TimeGrid(1.0, 2 ** 8))

    def test_small_eps(self):
        tab = roughness_tail_experiment(BAND, 0.55, [1e-6, 0.49], 20, grid=TimeGrid(1.0, 2 ** 10))
        assert tab.frequency[0] == 0.0
        assert tab.samples.shape == (2, 20)
        assert np.all(tab.frequency == tab.per_law.max(axis=0))

    def test_exponential_small_eps(self):
        tab = exponential_tail_check(BAND, [0.1], 200, grid=TimeGrid(1.0, 2 ** 8))
        assert tab.per_law.max() == 0.0 and tab.passed

    def test_brownian_sup_tail(self):
        # discrete monitoring shifts the barrier by about 0.5826 sqrt(dt)
        n, seeds = 2 ** 12, 4000
        tab = exponential_tail_check(VolatilityBand(1.0, 1.0), [0.5], seeds, grid=TimeGrid(1.0, n))
        want = oracles.sup_abs_bm_tail(2.0 + 0.5826 / np.sqrt(n))
        f = tab.per_law[0, 0]
        assert abs(f - want) <= 3 * 1.96 * np.sqrt(want * (1 - want) / seeds)
        assert tab.bound[0] == pytest.approx(np.exp(-4.0))
        # the frequency sits well above d exp(-1/(eps^2 d T s^2)): reported, not hidden
        assert tab.violations[0, 0] and not tab.passed
        assert f <= tab.reference_bound[0]


class TestNorris:
    RP = ito_lift(gbm(2 ** 10, 0))

    def test_zero(self):
        rp = self.RP
        y, z = identity_pair(rp, 0.0)
        rep = norris_diagnostic(y, z, rp, 0.55, 0.45)
        assert rep.sup_norm_I == rep.sup_norm_Y == rep.sup_norm_Z == 0.0
        assert rep.R_quantity >= 1

    def test_pure_drift(self):
        rp = self.RP
        n = rp.grid.n_steps + 1
        y = ControlledPath(rp, np.zeros(n), np.zeros(n))
        rep = norris_diagnostic(y, GridPath(rp.grid, np.ones(n)), rp, 0.55, 0.45)
        np.testing.assert_allclose(rep.I[:, 0], rp.grid.times, atol=1e-12)
        assert rep.sup_norm_I == pytest.approx(1.0)
        assert rep.sup_norm_Z == 1.0

    def test_hypothesis(self):
        y, z = identity_pair(self.RP)
        with pytest.raises(ValueError, match="hypothesis violated"):
            norris_diagnostic(y, z, self.RP, 0.9, 0.45)

    def test_scaling_fit(self):
        y, z = identity_pair(self.RP)
        reps = [norris_diagnostic(a, b, self.RP, 0.55, 0.45) for a, b in scaling_family(y, z)]
        fit = norris_scaling_fit(reps)
        assert fit.r > 0 and fit.r2 >= 0.95
        assert fit.n_points == 5

    def test_underdetermined(self):
        y, z = identity_pair(self.RP)
        reps = [norris_diagnostic(a, b, self.RP, 0.55, 0.45)
                for a, b in scaling_family(y, z, (1.0, 0.5))]
        with pytest.raises(ValueError, match="underdetermined"):
            norris_scaling_fit(reps)


class TestUniqueness:
    RP = ito_lift(gbm(2 ** 10, 1))

    def test_identical(self):
        y, z = identity_pair(self.RP)
        rep = uniqueness_check(y, z, y, z, self.RP)
        assert rep.status == "PASS" and rep.deviation == 0.0

    def test_small_perturbation(self):
        y1, z1 = identity_pair(self.RP)
        y2, z2 = identity_pair(self.RP, 1 + 1e-6)
        rep = uniqueness_check(y1, z1, y2, z2, self.RP)
        assert rep.deviation <= 1e-6 * (1 + np.abs(self.RP.path.values).max())
        assert rep.status in ("PASS", "FAIL")

    def test_gamma_perturbation_is_inconclusive(self):
        # Y' shifted by 1e-3 against the Stratonovich lift moves I by about 1e-3 <B>_T / 2
        b = gbm(2 ** 10, 2)
        rp = stratonovich_lift(ito_lift(b), quadratic_variation(b))
        y1, z = identity_pair(rp)
        y2 = ControlledPath(rp, y1.y, y1.y_prime + 1e-3)
        rep = uniqueness_check(y1, z, y2, z, rp)
        assert rep.integral_gap > 1e-4
        assert rep.status == "INCONCLUSIVE"
