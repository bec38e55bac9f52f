import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from grough.gbm_sim import ito_lift, quadratic_variation, stratonovich_lift
from grough.rough_core import (
    AlphaParams,
    ControlledPath,
    GridPath,
    LevelTwo,
    RoughPath,
    TimeGrid,
    all_triples,
    chen_defect,
    controlled_seminorm,
    hoelder_norm,
    level2_function,
    reconstruct_level2,
    remainder,
    remainder_norm,
    rough_path_seminorm,
    sample_triples,
    two_alpha_norm,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def path_strategy(max_steps=8, max_dim=2):
    return st.integers(2, max_steps).flatmap(
        lambda n: st.integers(1, max_dim).flatmap(
            lambda d: arrays(np.float64, (n + 1, d), elements=finite)))


def _path(values, T=1.0):
    values = np.asarray(values, dtype=float)
    return GridPath(TimeGrid(T, len(values) - 1), values)


def example_013():
    return ito_lift(_path([0.0, 1.0, 3.0]))


class TestGrid:
    @pytest.mark.parametrize("T,n", [(0.0, 4), (-1.0, 4), (1.0, 0), (1.0, 2.5)])
    def test_degenerate(self, T, n):
        with pytest.raises(ValueError, match="degenerate grid"):
            TimeGrid(T, n)

    def test_times(self):
        g = TimeGrid(2.0, 4, t0=1.0)
        np.testing.assert_allclose(g.times, [1.0, 1.5, 2.0, 2.5, 3.0])
        assert g.step == 0.5

    def test_path_shape_checks(self):
        g = TimeGrid(1.0, 3)
        assert GridPath(g, np.arange(4.0)).values.shape == (4, 1)
        with pytest.raises(ValueError):
            GridPath(g, np.zeros(3))
        with pytest.raises(ValueError, match="finite"):
            GridPath(g, [0, 1, np.nan, 2])

    def test_values_are_read_only(self):
        p = _path([0.0, 1.0, 2.0])
        with pytest.raises(ValueError):
            p.values[0, 0] = 5.0


class TestHoelder:
    @pytest.mark.parametrize("alpha", [0.1, 1 / 3, 0.5, 1.0])
    def test_constant_path(self, alpha):
        assert hoelder_norm(_path(np.full(5, 3.0)), alpha) == 0.0

    def test_linear_path(self):
        g = TimeGrid(1.0, 4)
        assert hoelder_norm(GridPath(g, g.times), 0.5) == pytest.approx(1.0)

    def test_tent(self):
        assert hoelder_norm(_path([0.0, 1.0, 0.0]), 1 / 3) == pytest.approx(2 ** (1 / 3), rel=1e-12)

    @pytest.mark.parametrize("alpha", [0.0, 1.5, -0.2])
    def test_alpha_range(self, alpha):
        with pytest.raises(ValueError):
            hoelder_norm(_path([0.0, 1.0]), alpha)

    @given(path_strategy(), st.floats(0.05, 1.0))
    @settings(max_examples=60, deadline=None)
    def test_matches_bruteforce(self, x, alpha):
        p = _path(x)
        assert hoelder_norm(p, alpha) == pytest.approx(
            oracles.hoelder_bruteforce(x, p.grid.times, alpha), rel=1e-12, abs=1e-12)


class TestLevelTwo:
    def test_two_alpha_example(self):
        assert two_alpha_norm(example_013(), 1 / 3) == pytest.approx(2.0, rel=1e-12)

    def test_zero(self):
        rp = ito_lift(_path(np.ones(6)))
        assert two_alpha_norm(rp, 0.4) == 0.0

    def test_doubling_blocks_doubles_norm(self):
        p = _path([0.0, 0.0, 0.0, 0.0])
        blocks = np.array([[[1.0]], [[-2.0]], [[0.5]]])
        one = two_alpha_norm(RoughPath(p, LevelTwo(blocks)), 0.4)
        two = two_alpha_norm(RoughPath(p, LevelTwo(2 * blocks)), 0.4)
        assert two == pytest.approx(2 * one)

    def test_reconstruct_examples(self):
        rp = example_013()
        assert reconstruct_level2(rp, 0, 2)[0, 0] == 2.0
        blocks = np.random.default_rng(0).normal(size=(5, 2, 2))
        rp2 = RoughPath(_path(np.random.default_rng(1).normal(size=(6, 2))), LevelTwo(blocks))
        for i in range(5):
            np.testing.assert_array_equal(reconstruct_level2(rp2, i, i + 1), blocks[i])

    @pytest.mark.parametrize("i,j", [(1, 1), (2, 1), (-1, 2), (0, 9)])
    def test_empty_interval(self, i, j):
        with pytest.raises(ValueError, match="empty interval"):
            reconstruct_level2(example_013(), i, j)

    @given(path_strategy(max_dim=3), st.data())
    @settings(max_examples=40, deadline=None)
    def test_reconstruction_matches_bruteforce(self, x, data):
        n, d = x.shape[0] - 1, x.shape[1]
        blocks = data.draw(arrays(np.float64, (n, d, d), elements=finite))
        rp = RoughPath(_path(x), LevelTwo(blocks))
        for i, j in [(0, n), (0, 1), (n - 1, n), (1, n)]:
            np.testing.assert_allclose(reconstruct_level2(rp, i, j),
                                       oracles.level2_bruteforce(x, blocks, i, j),
                                       rtol=1e-12, atol=1e-10)
        assert two_alpha_norm(rp, 0.4) == pytest.approx(
            oracles.two_alpha_bruteforce(x, blocks, rp.grid.times, 0.4), rel=1e-9, abs=1e-9)

    def test_level2_lag_agrees_with_direct(self):
        g = np.random.default_rng(3)
        rp = RoughPath(_path(g.normal(size=(33, 2))), LevelTwo(g.normal(size=(32, 2, 2))))
        for h in (1, 5, 32):
            lag = rp.level2_lag(h)
            for i in (0, 32 - h):
                np.testing.assert_allclose(lag[i], reconstruct_level2(rp, i, i + h), atol=1e-12)


class TestChen:
    def test_reconstructed_is_exact(self):
        g = np.random.default_rng(5)
        rp = RoughPath(_path(g.normal(size=(9, 2))), LevelTwo(g.normal(size=(8, 2, 2))))
        assert chen_defect(rp.path, level2_function(rp)) <= 1e-14

    def test_zero_level2_on_012(self):
        p = _path([0.0, 1.0, 2.0])
        assert chen_defect(p, lambda i, j: np.zeros((1, 1))) == pytest.approx(1.0)

    def test_zero_path(self):
        p = _path(np.zeros(5))
        assert chen_defect(p, lambda i, j: np.zeros((1, 1))) == 0.0

    def test_triples(self):
        assert len(all_triples(5)) == 20
        tri = sample_triples(100, 50, seed=1)
        assert tri.shape == (50, 3)
        assert np.all((tri[:, 0] < tri[:, 1]) & (tri[:, 1] < tri[:, 2]))
        np.testing.assert_array_equal(tri, sample_triples(100, 50, seed=1))

    @given(path_strategy(max_steps=6, max_dim=2))
    @settings(max_examples=30, deadline=None)
    def test_lifts_satisfy_chen(self, x):
        p = _path(x)
        ito = ito_lift(p)
        strat = stratonovich_lift(ito, quadratic_variation(p))
        scale = 1 + np.abs(x).max() ** 2
        assert chen_defect(p, level2_function(ito)) <= 1e-13 * scale
        assert chen_defect(p, level2_function(strat)) <= 1e-13 * scale


class TestSeminorms:
    def test_example_013(self):
        # oracle: enumerate all pairs on {0, 0.5, 1}
        t = np.array([0.0, 0.5, 1.0])
        x = np.array([[0.0], [1.0], [3.0]])
        lvl1 = oracles.hoelder_bruteforce(x, t, 1 / 3)
        lvl2 = oracles.two_alpha_bruteforce(x, np.zeros((2, 1, 1)), t, 1 / 3)
        # ratios 1/0.5^(1/3), 2/0.5^(1/3) and 3/1: the last one is the largest
        assert lvl1 == pytest.approx(3.0)
        assert lvl1 + np.sqrt(lvl2) == pytest.approx(3 + np.sqrt(2), rel=1e-12)
        assert rough_path_seminorm(example_013(), 1 / 3) == pytest.approx(lvl1 + np.sqrt(lvl2), rel=1e-12)

    def test_constant(self):
        assert rough_path_seminorm(ito_lift(_path(np.ones(4))), 0.4) == 0.0

    @pytest.mark.parametrize("lam", [0.5, 3.0, -2.0])
    def test_homogeneity(self, lam):
        g = np.random.default_rng(7)
        x, blocks = g.normal(size=(9, 2)), g.normal(size=(8, 2, 2))
        rp = RoughPath(_path(x), LevelTwo(blocks))
        rq = RoughPath(_path(lam * x), LevelTwo(lam ** 2 * blocks))
        assert rough_path_seminorm(rq, 0.4) == pytest.approx(abs(lam) * rough_path_seminorm(rp, 0.4))


class TestControlled:
    def test_identity_has_zero_remainder(self):
        rp = ito_lift(_path(np.random.default_rng(0).normal(size=(7, 2))))
        cp = ControlledPath(rp, rp.path.values, np.broadcast_to(np.eye(2), (7, 2, 2)))
        assert remainder_norm(cp, 0.4) == 0.0
        assert controlled_seminorm(cp, 0.4) == 0.0

    def test_constant(self):
        rp = ito_lift(_path([0.0, 2.0, -1.0, 0.5]))
        cp = ControlledPath(rp, np.full(4, 2.0), np.zeros(4))
        assert np.all(remainder(cp, 0, 3) == 0)

    def test_square(self):
        x = np.array([0.0, 0.7, -0.4, 1.3, 0.2])
        rp = ito_lift(_path(x))
        cp = ControlledPath(rp, x ** 2, 2 * x)
        for i in range(4):
            for j in range(i + 1, 5):
                assert remainder(cp, i, j)[0, 0] == pytest.approx((x[j] - x[i]) ** 2)

    def test_dimension_mismatch(self):
        rp = ito_lift(_path(np.zeros((4, 2))))
        with pytest.raises(ValueError, match="dimension mismatch"):
            ControlledPath(rp, np.zeros((4, 1, 3)), np.zeros((4, 1, 3, 3)))
        with pytest.raises(ValueError, match="dimension mismatch"):
            ControlledPath(rp, np.zeros((4, 1, 2)), np.zeros((4, 1, 2, 1)))

    def test_arithmetic(self):
        x = np.array([0.0, 1.0, 3.0])
        rp = ito_lift(_path(x))
        a = ControlledPath(rp, x, np.ones(3))
        diff = a - a.scaled(0.5)
        np.testing.assert_allclose(diff.y[:, 0, 0], 0.5 * x)


class TestAlphaParams:
    @pytest.mark.parametrize("alpha", [0.3, 0.5, 0.6])
    def test_alpha_range(self, alpha):
        with pytest.raises(ValueError):
            AlphaParams(alpha=alpha, theta=0.5)

    def test_theta_hypothesis(self):
        with pytest.raises(ValueError, match="hypothesis violated"):
            AlphaParams(alpha=0.4, theta=0.8)
        assert AlphaParams().scale(TimeGrid(2.0, 4)) == 1.0
