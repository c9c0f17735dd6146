import itertools
import math

import numpy as np
import pytest

from calibeat import procedures as proc
from calibeat.adversaries import (
    ActionExpert,
    AdaptiveWorstCase,
    BetaBinomialSource,
    ConstantSide,
    CyclicSide,
    IIDSource,
    PatternSource,
    RandomSide,
    beta_binomial_lambda,
)
from calibeat.geometry import Space
from calibeat.harness.lowerbound import abar_variance, expected_gap
from calibeat.harness.runner import simulate
from calibeat.procedures import ForecastDecision
from calibeat.scores import ScoreLedger, refinement_by_keys

UNIT = Space.cube(1)


def polya_paths(alpha, t):
    """Every 0/1 path of length t with its Polya-urn probability."""
    for path in itertools.product((0, 1), repeat=t):
        p, k = 1.0, 0
        for s, a in enumerate(path):
            q = (k + alpha) / (s + 2 * alpha)
            p *= q if a else 1 - q
            k += a
        yield np.array(path, dtype=float), p


def simple_gap(path):
    """B - R of running-mean calibeating with one bin and prior 1/2,
    recomputed directly from the definitions."""
    c = np.empty(len(path))
    c[0] = 0.5
    c[1:] = np.cumsum(path)[:-1] / np.arange(1, len(path))
    B = np.mean((path - c) ** 2)
    R = np.mean((path - path.mean()) ** 2)
    return B, R


class TestPattern:
    def test_alternating(self):
        src = PatternSource([1.0, 0.0])
        assert [src.next_action()[0] for _ in range(4)] == [1, 0, 1, 0]

    def test_period_three(self):
        src = PatternSource([1, 1, 0])
        assert [src.next_action()[0] for _ in range(6)] == [1, 1, 0, 1, 1, 0]

    def test_not_an_action(self):
        with pytest.raises(ValueError):
            PatternSource([0.5], UNIT)

    def test_constant_floor_stream(self):
        src = PatternSource([1.0], UNIT)
        assert all(src.next_action()[0] == 1.0 for _ in range(5))


class TestIID:
    def test_half_refinement(self):
        src = IIDSource(0.5, UNIT, 0)
        a = np.array([src.next_action()[0] for _ in range(100_000)])
        keys = np.arange(100_000) % 7
        assert abs(refinement_by_keys(a, keys.tolist()) - 0.25) <= 0.01

    def test_mean(self):
        src = IIDSource(0.37, UNIT, 1)
        a = np.array([src.next_action()[0] for _ in range(100_000)])
        assert abs(a.mean() - 0.37) <= 3 * math.sqrt(0.37 * 0.63 / 1e5)

    def test_degenerate(self):
        src = IIDSource(1.0, UNIT, 2)
        assert all(src.next_action()[0] == 1.0 for _ in range(100))

    def test_invalid(self):
        with pytest.raises(ValueError):
            IIDSource(1.2, UNIT)
        with pytest.raises(ValueError):
            IIDSource([0.5, 0.6, 0.0, 0.0], Space.cube(2))


class TestBetaBinomial:
    def test_lambda(self):
        assert beta_binomial_lambda(50) == pytest.approx(50 / 202)
        assert beta_binomial_lambda(1e9) == pytest.approx(0.25, abs=1e-9)

    def test_exhaustive_alpha1_t2(self):
        probs = {tuple(p): w for p, w in polya_paths(1.0, 2)}
        assert sum(probs.values()) == pytest.approx(1.0)
        mean = sum(w * np.mean(p) for p, w in probs.items())
        var = sum(w * (np.mean(p) - mean) ** 2 for p, w in probs.items())
        assert mean == pytest.approx(0.5)
        assert var == pytest.approx(1 / 6, abs=1e-15)
        assert abar_variance(1.0, 2) == pytest.approx(1 / 6, abs=1e-15)

    @pytest.mark.parametrize("alpha,t", [(0.5, 6), (1.0, 8), (5.0, 10), (50.0, 7)])
    def test_exhaustive_moments(self, alpha, t):
        paths = list(polya_paths(alpha, t))
        var = sum(w * (p.mean() - 0.5) ** 2 for p, w in paths)
        assert var == pytest.approx(abar_variance(alpha, t), rel=1e-12)
        lam = beta_binomial_lambda(alpha)
        ER = sum(w * simple_gap(p)[1] for p, w in paths)
        assert ER == pytest.approx(lam - lam / t, rel=1e-12)
        Egap = sum(w * (simple_gap(p)[0] - simple_gap(p)[1]) for p, w in paths)
        assert Egap == pytest.approx(expected_gap(alpha, t), rel=1e-12)

    def test_object_path_matches_definition(self):
        src = BetaBinomialSource(5.0, 11)
        sim = simulate(proc.simple_calibeat(UNIT), src, [ConstantSide()], 200)
        B, R = simple_gap(sim.actions[:, 0])
        assert sim.ledger.brier() == pytest.approx(B, abs=1e-13)
        assert sim.side_refinements[0].final() == pytest.approx(R, abs=1e-13)

    def test_urn_counters(self):
        src = BetaBinomialSource(2.0, 0)
        assert src.posterior_mean == 0.5
        a = [src.next_action()[0] for _ in range(10)]
        assert src.posterior_mean == pytest.approx((sum(a) + 2) / 14)

    @pytest.mark.parametrize("alpha,t", [(1.0, 10), (5.0, 100), (50.0, 10)])
    def test_monte_carlo_moments(self, alpha, t):
        n = 4000
        ab = np.empty(n)
        for i in range(n):
            src = BetaBinomialSource(alpha, 1000 + i)
            ab[i] = np.mean([src.next_action()[0] for _ in range(t)])
        se = ab.std(ddof=1) / math.sqrt(n)
        assert abs(ab.mean() - 0.5) <= 4 * se
        mu4 = np.mean((ab - ab.mean()) ** 4)
        var = ab.var(ddof=1)
        var_se = math.sqrt((mu4 - var ** 2 * (n - 3) / (n - 1)) / n)
        assert abs(var - abar_variance(alpha, t)) <= 4 * var_se

    def test_alpha_positive(self):
        with pytest.raises(ValueError):
            BetaBinomialSource(0.0)


def decision(c, dist=None):
    return ForecastDecision(np.atleast_1d(np.asarray(c, dtype=float)), None, dist)


class TestAdaptive:
    def test_farthest_vertex(self):
        assert AdaptiveWorstCase(UNIT).next_action(decision(0.3))[0] == 1.0
        assert AdaptiveWorstCase(UNIT).next_action(decision(0.8))[0] == 0.0

    def test_tie_towards_one(self):
        assert AdaptiveWorstCase(UNIT).next_action(decision(0.5))[0] == 1.0
        sq = AdaptiveWorstCase(Space.cube(2))
        assert sq.next_action(decision([0.5, 0.5])).tolist() == [1.0, 1.0]
        assert sq.next_action(decision([0.5, 0.2])).tolist() == [1.0, 1.0]

    def test_needs_decision(self):
        with pytest.raises(ValueError):
            AdaptiveWorstCase(UNIT).next_action()

    def test_announced_uses_mean(self):
        class Eta:
            mean = np.array([0.7])

        src = AdaptiveWorstCase(UNIT, "announced")
        assert src.next_action(decision(0.2, Eta()))[0] == 0.0
        assert AdaptiveWorstCase(UNIT, "realized").next_action(decision(0.2, Eta()))[0] == 1.0

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            AdaptiveWorstCase(UNIT, "psychic")


class TestSides:
    def test_constant_and_cyclic(self):
        assert ConstantSide("x").next_side(5) == "x"
        assert [CyclicSide(2).next_side(t) for t in range(1, 5)] == [0, 1, 0, 1]

    def test_random_seeded(self):
        a = [RandomSide(5, 3).next_side(t) for t in range(1, 3)]
        s1, s2 = RandomSide(5, 3), RandomSide(5, 3)
        assert [s1.next_side(t) for t in range(50)] == [s2.next_side(t) for t in range(50)]
        assert all(0 <= v < 5 for v in a)

    def test_experts(self):
        a = np.array([1.0])
        assert ActionExpert("perfect").next_side(1, a) == (1.0,)
        assert ActionExpert("anti").next_side(1, a) == (0.0,)
        noisy = ActionExpert("noisy", flip=0.0)
        assert noisy.next_side(1, a) == (1.0,)
        with pytest.raises(ValueError):
            ActionExpert("perfect").next_side(1)

    def test_expert_needs_oblivious_source(self):
        with pytest.raises(ValueError):
            simulate(proc.simple_calibeat(UNIT), AdaptiveWorstCase(UNIT), [ActionExpert()], 5)

    def test_unbounded_alphabet(self):
        # a fresh label every period: the realized bin count grows with t
        class Fresh(ConstantSide):
            def next_side(self, t, action=None):
                return t

        sim = simulate(proc.simple_calibeat(UNIT), IIDSource(0.5, UNIT, 0), [Fresh()], 50)
        assert sim.series["N_side_0"].tolist() == list(range(1, 51))
        assert sim.side_refinements[0].final() == 0.0
        led = ScoreLedger(1)
        for a, c in zip(sim.actions, sim.forecasts):
            led.record(a, c)
        assert led.brier() == pytest.approx(0.25, abs=1e-15)
