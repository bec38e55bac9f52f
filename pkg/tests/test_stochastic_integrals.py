import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grough.gbm_sim import (
    VolatilityBand,
    quadratic_variation,
    sample_control,
    sample_gbm_path,
)
from grough.rough_core import GridPath, TimeGrid
from grough.rough_integral import Partition
from grough.stochastic_integrals import (
    IntegrandSpec,
    cross_variation,
    cross_variation_decay,
    ito_formula_residual,
    ito_integral,
    ito_process,
    midpoint_convergence,
    midpoint_sum,
    stratonovich_integral,
)

BAND = VolatilityBand(0.5, 1.0)


def gbm(n_steps, seed, dim=1):
    grid = TimeGrid(1.0, n_steps)
    band = BAND if dim == 1 else VolatilityBand.isotropic(0.5, 1.0, dim)
    return sample_gbm_path(sample_control(band, "piecewise_constant", seed, grid), seed).b


seeds = st.integers(0, 10_000)


class TestIto:
    def test_unit_integrand(self):
        b = gbm(128, 0)
        y = IntegrandSpec("constant").evaluate(b)
        np.testing.assert_allclose(ito_integral(y, b).values, b.values, atol=1e-13)

    @given(seeds)
    @settings(max_examples=20, deadline=None)
    def test_b_db(self, seed):
        b = gbm(512, seed)
        ito = ito_integral(b, b).values[:, 0]
        qv = quadratic_variation(b).qv[:, 0, 0]
        np.testing.assert_allclose(ito, 0.5 * (b.values[:, 0] ** 2 - qv), atol=1e-12)

    @pytest.mark.parametrize("n", [1, 4, 100])
    def test_deterministic(self, n):
        g = TimeGrid(1.0, n)
        t = GridPath(g, g.times)
        assert ito_integral(t, t).values[-1, 0] == pytest.approx(0.5 - 1 / (2 * n))

    def test_matrix_integrand(self):
        b = gbm(64, 1, dim=2)
        y = GridPath(b.grid, np.tile([1.0, 0.0, 0.0, 2.0], (65, 1)))
        out = ito_integral(y, b).values
        np.testing.assert_allclose(out, b.values * [1.0, 2.0], atol=1e-13)

    def test_shape_errors(self):
        b = gbm(16, 0, dim=2)
        with pytest.raises(ValueError):
            ito_integral(GridPath(b.grid, np.zeros((17, 3))), b)
        with pytest.raises(ValueError, match="grid mismatch"):
            ito_integral(gbm(8, 0), gbm(16, 0))


class TestCrossVariation:
    def test_constant(self):
        b = gbm(64, 0)
        assert np.all(cross_variation(IntegrandSpec("constant", 3.0).evaluate(b), b).values == 0)

    def test_self_is_qv(self):
        b = gbm(256, 2, dim=2)
        np.testing.assert_allclose(cross_variation(b, b).values, quadratic_variation(b).qv, atol=1e-15)

    def test_beta_two(self):
        b = gbm(256, 3)
        y = ito_process(b, beta=lambda t, x: 2.0)
        np.testing.assert_allclose(cross_variation(y, b).values[:, 0, 0],
                                   2 * quadratic_variation(b).qv[:, 0, 0], atol=1e-13)


class TestStratonovich:
    def test_unit(self):
        b = gbm(64, 0)
        y = IntegrandSpec("constant").evaluate(b)
        np.testing.assert_allclose(stratonovich_integral(y, b).values, b.values, atol=1e-13)

    @given(seeds)
    @settings(max_examples=20, deadline=None)
    def test_half_square(self, seed):
        b = gbm(1024, seed)
        np.testing.assert_allclose(stratonovich_integral(b, b).values[:, 0],
                                   0.5 * b.values[:, 0] ** 2, atol=1e-12)

    @given(seeds)
    @settings(max_examples=20, deadline=None)
    def test_midpoint_at_base_grid(self, seed):
        b = gbm(256, seed)
        y = GridPath(b.grid, np.sin(b.values))
        base = Partition.base(256)
        assert midpoint_sum(y, b, base)[0] == pytest.approx(
            stratonovich_integral(y, b).values[-1, 0], abs=1e-12)


class TestMidpointConvergence:
    def test_constant_integrand(self):
        b = gbm(256, 0)
        rep = midpoint_convergence(IntegrandSpec("constant", 2.0).evaluate(b), b)
        assert rep.exact and np.all(rep.gaps <= 1e-12)

    def test_identity_is_exact(self):
        # the midpoint sum of B against B telescopes to B_T^2 / 2 on any partition
        b = gbm(4096, 1)
        rep = midpoint_convergence(b, b)
        assert rep.exact and np.isnan(rep.fitted_order)

    def test_square_integrand_rate(self):
        gaps = []
        for seed in range(20):
            b = gbm(2 ** 12, seed)
            rep = midpoint_convergence(GridPath(b.grid, b.values ** 2), b)
            gaps.append(rep.gaps)
        mean = np.mean(gaps, axis=0)
        from grough.rough_integral import fit_order
        assert mean[-1] <= 1e-12
        assert fit_order(rep.moduli[:-1], mean[:-1]) >= 0.5

    def test_two_b_limit(self):
        b = gbm(2 ** 12, 5)
        y = ito_process(b, beta=lambda t, x: 2.0)
        rep = midpoint_convergence(y, b)
        target = ito_integral(y, b).values[-1, 0] + quadratic_variation(b).qv[-1, 0, 0]
        assert rep.reference[0] == pytest.approx(target, abs=1e-12)
        assert rep.gaps[-1] <= 1e-12

    def test_cross_variation_decay(self):
        b = gbm(2 ** 12, 7)
        rep = cross_variation_decay(IntegrandSpec("constant").evaluate(b), b)
        assert rep.exact


class TestItoFormula:
    def test_linear(self):
        for seed in range(5):
            b = gbm(2 ** 12, seed)
            r = ito_formula_residual(lambda x: 3 * x[:, 0] + 1, lambda x: np.full_like(x, 3.0),
                                     lambda x: np.zeros(x.shape + (1,)), b)
            assert r <= 1e-12

    def test_square(self):
        b = gbm(2 ** 14, 0)
        r = ito_formula_residual(lambda x: x[:, 0] ** 2, lambda x: 2 * x,
                                 lambda x: np.full(x.shape + (1,), 2.0), b)
        assert r <= 1e-12

    def test_cube_envelope(self):
        n = 2 ** 14
        inside = 0
        for seed in range(100):
            b = gbm(n, seed)
            r = ito_formula_residual(lambda x: x[:, 0] ** 3, lambda x: 3 * x ** 2,
                                     lambda x: 6 * x[:, :, None], b)
            inside += r <= 5e-2 * (1 + np.abs(b.values).max() ** 3)
        assert inside >= 95

    def test_general_process_quadratic(self):
        # X = 1 + int 0.7 dB + int 0.3 dt + int 0.2 d<B>; Phi = x^2 is exact on the grid
        b = gbm(2 ** 10, 3)
        r = ito_formula_residual(lambda x: x[:, 0] ** 2, lambda x: 2 * x,
                                 lambda x: np.full(x.shape + (1,), 2.0), b,
                                 beta=lambda t, x: 0.7, drift=lambda t, x: 0.3,
                                 gamma=lambda t, x: 0.2, xi=1.0)
        # residual is sum of (0.3 dt + 0.2 dqv)^2 and cross terms with dB: O(dt^{3/2})
        assert r <= 1e-2

    def test_multidim_square(self):
        b = gbm(2 ** 10, 4, dim=2)
        r = ito_formula_residual(lambda x: (x ** 2).sum(1), lambda x: 2 * x,
                                 lambda x: np.broadcast_to(2 * np.eye(2), (len(x), 2, 2)), b,
                                 xi=[0.0, 0.0])
        assert r <= 1e-12
