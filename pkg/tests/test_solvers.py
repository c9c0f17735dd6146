import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from calibeat.geometry import Space, make_grid, make_log_grid
from calibeat.solvers import (
    MatrixGame,
    outgoing_fixed_point_1d,
    outgoing_mm,
    outgoing_mm_log,
    outgoing_payoff,
    solve_zero_sum,
)
from oracles import support_enumeration_value


class TestZeroSum:
    def test_matching_pennies(self):
        s = solve_zero_sum(MatrixGame([[1, -1], [-1, 1]]))
        assert abs(s.value) <= 1e-12
        np.testing.assert_allclose(s.min_strategy, [0.5, 0.5], atol=1e-12)

    def test_one_by_one(self):
        s = solve_zero_sum([[3.0]])
        assert s.value == 3.0 and s.min_strategy.tolist() == [1.0]

    def test_non_finite(self):
        with pytest.raises(ValueError):
            MatrixGame([[1.0, np.inf]])

    def test_oracle_small_known(self):
        assert support_enumeration_value([[1, -1], [-1, 1]]) == pytest.approx(0.0)
        assert support_enumeration_value([[2, 0], [0, 1]]) == pytest.approx(2 / 3)

    @pytest.mark.parametrize("seed", range(20))
    def test_random_5x7_against_oracle(self, seed):
        A = np.random.default_rng(seed).normal(size=(5, 7))
        s = solve_zero_sum(A, 1e-9)
        assert s.value == pytest.approx(support_enumeration_value(A), abs=1e-7)

    @pytest.mark.parametrize("shape", [(3, 3), (10, 4), (4, 10), (25, 25), (50, 50), (50, 17)])
    def test_duality_gap(self, shape):
        rng = np.random.default_rng(shape[0] * 100 + shape[1])
        tol = 1e-9
        for _ in range(3):
            A = rng.uniform(-1, 1, shape)
            s = solve_zero_sum(A, tol)
            assert s.gap <= 2 * tol
            assert np.all(s.min_strategy >= 0) and abs(s.min_strategy.sum() - 1) <= 1e-12
            assert np.max(A @ s.min_strategy) <= s.value + 1e-12

    def test_fallback_certifies(self):
        A = np.random.default_rng(9).uniform(-1, 1, (220, 210))
        s = solve_zero_sum(A, 1e-3)
        assert s.gap <= 1e-3
        assert s.lower - 1e-12 <= s.upper


class TestOutgoingMM:
    def test_identity(self):
        sp = Space.cube(1)
        grid = make_grid(sp, 4)
        d = outgoing_mm(grid.points, grid, sp)
        assert d.guarantee <= 1e-9 and d.certified
        assert abs(d.probs.sum() - 1) <= 1e-12

    def test_constant(self):
        sp = Space.cube(2)
        grid = make_grid(sp, 3)
        x0 = grid.points[5]
        d = outgoing_mm(np.tile(x0, (len(grid), 1)), grid, sp)
        assert d.guarantee <= 1e-9
        np.testing.assert_allclose(d.mean, x0, atol=1e-9)

    def test_three_point_example(self):
        sp = Space.cube(1)
        grid = make_grid(sp, 2)
        g = np.array([[1.0], [1.0], [0.0]])
        d = outgoing_mm(g, grid, sp)
        M = outgoing_payoff(np.array([[0.0], [1.0]]), grid.points, g)
        # hand-solved: eta = (0, 2/3, 1/3), value -1/6
        assert support_enumeration_value(M) == pytest.approx(-1 / 6, abs=1e-12)
        assert d.guarantee == pytest.approx(-1 / 6, abs=1e-9)
        full = np.zeros(3)
        full[d.indices] = d.probs
        np.testing.assert_allclose(full, [0, 2 / 3, 1 / 3], atol=1e-9)
        assert d.guarantee <= grid.delta ** 2

    @pytest.mark.parametrize("m,res", [(1, 8), (1, 32), (2, 6), (2, 12)])
    def test_certificate_random_probes(self, m, res):
        sp = Space.cube(m)
        grid = make_grid(sp, res)
        rng = np.random.default_rng(res + m)
        for _ in range(5):
            g = rng.random((len(grid), m))
            d = outgoing_mm(g, grid, sp)
            assert d.certified
            X = rng.random((1000, m))
            full = np.zeros(len(grid))
            full[d.indices] = d.probs
            emp = outgoing_payoff(X, grid.points, g) @ full
            assert np.max(emp) <= d.guarantee + 1e-9
            assert d.guarantee <= grid.delta ** 2 + 1e-9

    def test_simplex_certificate(self):
        sp = Space.simplex(3)
        grid = make_grid(sp, 6)
        rng = np.random.default_rng(0)
        g = rng.dirichlet(np.ones(3), len(grid))
        d = outgoing_mm(g, grid, sp)
        X = rng.dirichlet(np.ones(3), 1000)
        full = np.zeros(len(grid))
        full[d.indices] = d.probs
        assert np.max(outgoing_payoff(X, grid.points, g) @ full) <= d.guarantee + 1e-9
        assert d.certified

    def test_sample_inverse_cdf(self):
        sp = Space.cube(1)
        grid = make_grid(sp, 2)
        d = outgoing_mm(np.array([[1.0], [1.0], [0.0]]), grid, sp)
        assert d.sample(0.0) == 1 and d.sample(0.5) == 1 and d.sample(0.9) == 2


class TestOutgoingMMLog:
    def test_swap_example(self):
        grid = make_log_grid(2, 2, floor=0.25)
        g = grid.points[::-1].copy()
        d = outgoing_mm_log(g, grid)
        M = (np.log(g) - np.log(grid.points)).T
        assert support_enumeration_value(M) == pytest.approx(0.0, abs=1e-12)
        assert d.guarantee == pytest.approx(0.0, abs=1e-9)
        assert d.certified

    def test_identity_and_constant(self):
        grid = make_log_grid(3, 4)
        assert outgoing_mm_log(grid.points, grid).guarantee <= 1e-12
        dstar = grid.points[3]
        d = outgoing_mm_log(np.tile(dstar, (len(grid), 1)), grid)
        assert d.guarantee <= 1e-9

    def test_zero_coordinate(self):
        grid = make_log_grid(2, 2)
        with pytest.raises(ValueError):
            outgoing_mm_log(np.array([[1.0, 0.0]] * 3), grid)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 4), st.integers(0, 2**32 - 1))
    def test_vertex_rows_dominate(self, m, seed):
        rng = np.random.default_rng(seed)
        grid = make_log_grid(m, 4)
        g = rng.dirichlet(np.ones(m), len(grid)) * 0.9 + 0.1 / m
        d = outgoing_mm_log(g, grid)
        full = np.zeros(len(grid))
        full[d.indices] = d.probs
        M = (np.log(g) - np.log(grid.points)).T
        for a in rng.dirichlet(np.ones(m), 50):
            assert float(a @ M @ full) <= float(np.max(M @ full)) + 1e-12
        assert d.guarantee <= grid.delta + 1e-9


class TestFixedPoint:
    def test_linear(self):
        r = outgoing_fixed_point_1d(lambda y: 0.3 - y)
        assert r.kind == "interior" and r.point == pytest.approx(0.3, abs=1e-12)

    def test_endpoint(self):
        r = outgoing_fixed_point_1d(lambda y: -y)
        assert r.point == 0.0 and r.kind == "lower"

    def test_upper_endpoint(self):
        r = outgoing_fixed_point_1d(lambda y: 1.0 - 0.5 * y)
        assert r.point == 1.0 and r.kind == "upper"

    def test_non_finite(self):
        with pytest.raises(ValueError):
            outgoing_fixed_point_1d(lambda y: math.nan)

    @pytest.mark.parametrize("seed", range(10))
    def test_bin_table_map_dense_probe(self, seed):
        # g(y) = sum_i w_i(y) e_i interpolated from random bin averages
        rng = np.random.default_rng(seed)
        nodes = np.linspace(0, 1, 11)
        targets = rng.random(11)
        tol = 1e-12

        def f(y):
            return float(np.interp(y, nodes, targets)) - y

        r = outgoing_fixed_point_1d(f, tol=tol, breakpoints=nodes)
        y, v = r.point, f(r.point)
        xs = np.linspace(0, 1, 10_000)
        slack = (xs - y) ** 2 - (xs - y - v) ** 2
        assert np.max(slack) <= 1e-10
        assert r.residual <= 1e-10
