"""Monte Carlo of the beta-binomial lower-bound experiment."""

from __future__ import annotations

import math

import numpy as np

from .. import bounds
from .montecarlo import lowerbound_batch, replication_seeds


def abar_variance(alpha: float, t: int) -> float:
    """Var of the action average after t beta-binomial draws."""
    return (t + 2.0 * alpha) / (4.0 * (2.0 * alpha + 1.0) * t)


def expected_gap(alpha: float, t: int) -> float:
    """E[B - R] for simple calibeating with a constant side forecast (prior
    1/2) against the beta-binomial source, summed from the conditional
    second moments of a_s - abar_{s-1}."""
    lam = bounds.lower_bound_lambda(alpha)
    terms = [0.25]
    for s in range(2, t + 1):
        terms.append(
            lam + lam / (s + 2.0 * alpha - 1.0)
            + alpha ** 2 / ((s - 1 + 2.0 * alpha) * (2.0 * alpha + 1.0) * (s - 1))
        )
    brier = math.fsum(terms) / t
    refinement = lam - lam / t
    return brier - refinement


def run(alpha: float = 50.0, horizon: int = 1000, reps: int = 10_000, seed: int = 0) -> dict:
    seeds = replication_seeds(seed, reps)
    res = lowerbound_batch(alpha, horizon, seeds)
    lam = bounds.lower_bound_lambda(alpha)
    n = len(seeds)
    gap_mean = float(res.gap.mean())
    gap_se = float(res.gap.std(ddof=1) / math.sqrt(n))
    threshold = 0.9 * lam * math.log(horizon) / horizon
    abar_mean = float(res.abar.mean())
    abar_se = float(res.abar.std(ddof=1) / math.sqrt(n))
    var = float(res.abar.var(ddof=1))
    # standard error of a sample variance: sqrt((mu4 - var^2 (n-3)/(n-1)) / n)
    centered = res.abar - abar_mean
    mu4 = float(np.mean(centered ** 4))
    var_se = math.sqrt(max(mu4 - var ** 2 * (n - 3) / (n - 1), 0.0) / n)
    var_exact = abar_variance(alpha, horizon)
    return {
        "alpha": alpha,
        "horizon": horizon,
        "replications": n,
        "lambda": lam,
        "gap_mean": gap_mean,
        "gap_stderr": gap_se,
        "gap_threshold": threshold,
        "gap_expected": expected_gap(alpha, horizon),
        "lower_bound_exact": bounds.lower_bound_exact(alpha, horizon),
        "gap_pass": gap_mean >= threshold,
        "abar_mean": abar_mean,
        "abar_mean_stderr": abar_se,
        "abar_mean_pass": abs(abar_mean - 0.5) <= 4 * abar_se,
        "abar_var": var,
        "abar_var_stderr": var_se,
        "abar_var_exact": var_exact,
        "abar_var_pass": abs(var - var_exact) <= 4 * var_se,
        "seed": seed,
    }
