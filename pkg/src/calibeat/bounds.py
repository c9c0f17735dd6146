"""Closed-form finite-time envelopes.  Functions of the horizon t accept
scalars or numpy arrays; every function returns the bound value, and
``describe`` gives the formula with its constants for audit trails."""

from __future__ import annotations

import math

import numpy as np


def log_term(t: int) -> float:
    return (np.log(t) + 1.0) / t


def simple_calibeat(gamma: float, n_bins: int, t: int) -> float:
    """B^c - R^b <= gamma^2 |B| (ln t + 1) / t."""
    return gamma ** 2 * n_bins * log_term(t)


def centered_calibeat(radius: float, n_bins: int, t: int) -> float:
    """B^c' - R^b <= r^2 |B| (ln t + 1) / t."""
    return radius ** 2 * n_bins * log_term(t)


def online_refinement_gap(gamma: float, n_bins: int, t: int) -> float:
    """R~ - R <= gamma^2 (N/t)(ln(t/N) + 1)."""
    return gamma ** 2 * (n_bins / t) * (np.log(t / n_bins) + 1.0)


def online_variance_gap(xi: float, n: float) -> float:
    """v~ - v <= xi^2 (ln n + 1) / n."""
    return xi ** 2 * (np.log(n) + 1.0) / n


def weighted_online_variance_gap(xi: float, total_weight: float) -> float:
    """v~ - v <= xi^2 (ln L + 2) / L for total weight L >= 1."""
    return xi ** 2 * (np.log(total_weight) + 2.0) / total_weight


def calibration(delta: float, gamma: float, grid_size: int, t: int) -> float:
    """E[K_t] <= delta^2 + gamma^2 |D| (ln t + 1) / t."""
    return delta ** 2 + gamma ** 2 * grid_size * log_term(t)


def calibrated_calibeat(delta: float, gamma: float, n_bins: int, grid_size: int, t: int) -> float:
    """E[B^c - R^b] and E[K^c] <= delta^2 + gamma^2 |B||D| (ln t + 1) / t."""
    return delta ** 2 + gamma ** 2 * n_bins * grid_size * log_term(t)


def fractional_online_gap(gamma: float, n_bins: int, n_weights: int, t: int) -> float:
    """R~^{b,Pi} - R^{b,Pi} <= 4 gamma^2 |B||J| (ln t + 2) / t."""
    return 4.0 * gamma ** 2 * n_bins * n_weights * (np.log(t) + 2.0) / t


def multi_simple(gamma: float, bins_product: int, t: int) -> float:
    return gamma ** 2 * bins_product * log_term(t)


def blackwell(gamma: float, n_experts: int, n_bins: int, t: int) -> float:
    """B^c - R^n <= gamma^2 sqrt(N / t) + gamma^2 |B^n| (ln t + 1) / t."""
    return gamma ** 2 * np.sqrt(n_experts / t) + gamma ** 2 * n_bins * log_term(t)


def blackwell_dist2(gamma: float, n_experts: int, t: int) -> float:
    """Squared distance of the average regret vector to the negative orthant."""
    return gamma ** 4 * n_experts / t


def forward_regression(m: int, gamma0: float, n_experts: int, alpha: float, gamma: float, n_bins: int, t: int) -> float:
    """B^c - R^n <= (m g0 N / t) ln(g0 t / alpha + 1) + m alpha / t + gamma^2 |B^n| (ln t + 1) / t."""
    return (
        m * gamma0 * n_experts / t * np.log(gamma0 * t / alpha + 1.0)
        + m * alpha / t
        + gamma ** 2 * n_bins * log_term(t)
    )


def lower_bound_lambda(alpha: float) -> float:
    return alpha / (2.0 * (2.0 * alpha + 1.0))


def lower_bound_exact(alpha: float, t: int) -> float:
    """(lambda / t) (sum_{s<=t} 1/(s + 2 alpha - 1) + 1): the finite-t lower
    bound on E[B^c - R^b] for every procedure under the beta-binomial source."""
    lam = lower_bound_lambda(alpha)
    return lam / t * (math.fsum(1.0 / (s + 2.0 * alpha - 1.0) for s in range(1, t + 1)) + 1.0)


def jung_radius_bound(gamma: float, m: int) -> float:
    return gamma * math.sqrt(m / (2.0 * m + 2.0))


def describe(name: str, **constants) -> str:
    consts = ", ".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}" for k, v in constants.items())
    doc = globals()[name].__doc__ or name
    return f"{doc.strip().splitlines()[0]} [{consts}]"
