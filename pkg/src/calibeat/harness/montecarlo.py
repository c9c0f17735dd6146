"""Vectorized Monte Carlo kernels.

Each kernel runs many independent replications in lockstep with numpy,
reproducing exactly the arithmetic of the corresponding object-level
procedure (same Welford updates, same two-row game solution, same
inverse-CDF sampling from each replication's own generator), so a kernel
replication and an object-level run with the same seed produce the same
forecasts.  The tests pin that equivalence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import LogGrid, make_grid, make_log_grid, Space


def replication_seeds(base_seed: int, n: int) -> list[int]:
    """Independent 64-bit seeds for ``n`` replications."""
    return [int(s) for s in np.random.SeedSequence(base_seed).generate_state(n, np.uint64)]


def two_row_min_strategy(r0: np.ndarray, r1: np.ndarray) -> np.ndarray:
    """Minimizer's optimal mixed strategy for a batch of 2 x n games.

    Same tie-breaking as the scalar solver: the first best pure column, then
    the first best mixing pair (j, k) with r0 - r1 > 0 at j and < 0 at k,
    scanned in row-major order, replacing the pure column only if strictly
    better.
    """
    S, n = r0.shape
    d = r0 - r1
    pure = np.maximum(r0, r1)
    jbest = np.argmin(pure, axis=1)
    rows = np.arange(S)
    best = pure[rows, jbest]
    q = np.zeros((S, n))
    q[rows, jbest] = 1.0
    dJ = d[:, :, None]
    dK = d[:, None, :]
    valid = (dJ > 0) & (dK < 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = -dK / (dJ - dK)
        vals = mu * r0[:, :, None] + (1.0 - mu) * r0[:, None, :]
    vals = np.where(valid, vals, np.inf).reshape(S, n * n)
    mu = mu.reshape(S, n * n)
    i = np.argmin(vals, axis=1)
    v = vals[rows, i]
    mix = v < best
    if mix.any():
        r = rows[mix]
        J, K = np.divmod(i[mix], n)
        mm = mu[r, i[mix]]
        q[r] = 0.0
        q[r, J] = mm
        q[r, K] += 1.0 - mm
    return q


def _clean(q: np.ndarray) -> np.ndarray:
    q = np.where(q > 0, q, 0.0)
    return q / q.sum(axis=1, keepdims=True)


def sample_support(q: np.ndarray, u: np.ndarray, points: np.ndarray):
    """Inverse-CDF draw for each row of ``q`` (support of size <= 2).

    Returns the sampled indices and the mean point of each distribution.
    """
    q = _clean(_clean(q))
    S, n = q.shape
    order = np.argsort(q <= 0, axis=1, kind="stable")  # support first, in index order
    size = (q > 0).sum(axis=1)
    if np.any(size > 2):
        raise ValueError("batch sampler expects supports of size <= 2")
    rows = np.arange(S)
    i0 = order[:, 0]
    i1 = np.where(size > 1, order[:, 1], i0)
    p0 = q[rows, i0]
    p1 = np.where(size > 1, q[rows, i1], 0.0)
    tot = np.where(size > 1, p0 + p1, p0)
    p0n = p0 / tot
    p1n = np.where(size > 1, p1 / tot, 0.0)
    c0 = p0n
    # searchsorted(cdf, u, 'right') clipped to the last support point
    idx = np.where((u < c0) | (size == 1), i0, i1)
    mean = p0n[:, None] * points[i0] + p1n[:, None] * points[i1]
    return idx, mean


@dataclass
class CalibratedBatchResult:
    seeds: list
    horizon: int
    checkpoints: np.ndarray
    B: np.ndarray  # (S, len(checkpoints))
    K: np.ndarray
    R_side: np.ndarray
    forecasts: np.ndarray | None = None  # (S, horizon) when kept
    actions: np.ndarray | None = None


def calibrated_batch(
    seeds,
    horizon: int,
    resolution: int = 10,
    side_period: int = 1,
    checkpoints=None,
    keep_paths: bool = False,
) -> CalibratedBatchResult:
    """Calibrated (side_period = 1) or calibrated-calibeat forecasters on
    [0, 1] against the adversary that plays the vertex farthest from the
    announced mean forecast.  Side forecasts are (t - 1) mod side_period."""
    space = Space.cube(1)
    grid = make_grid(space, resolution)
    Y = grid.points[:, 0]
    D = Y.size
    S = len(seeds)
    U = np.array([np.random.default_rng(s).random(horizon) for s in seeds])
    prior = 0.5
    jcount = np.zeros((S, side_period, D))
    jmean = np.zeros((S, side_period, D))
    fcount = np.zeros((S, D))
    fmean = np.zeros((S, D))
    scount = np.zeros((S, side_period))
    smean = np.zeros((S, side_period))
    sm2 = np.zeros((S, side_period))
    bsum = np.zeros(S)
    cps = np.array(sorted(set(checkpoints or [horizon])))
    outB = np.empty((S, cps.size))
    outK = np.empty((S, cps.size))
    outR = np.empty((S, cps.size))
    paths_c = np.empty((S, horizon)) if keep_paths else None
    paths_a = np.empty((S, horizon)) if keep_paths else None
    rows = np.arange(S)
    ci = 0
    y2 = Y * Y
    for t in range(1, horizon + 1):
        b = (t - 1) % side_period
        n = jcount[:, b, :]
        G = np.where(n > 0, jmean[:, b, :], prior)
        base = y2 - G * G
        r0 = 2.0 * 0.0 * (G - Y) + base
        r1 = 2.0 * (G - Y) + base
        q = two_row_min_strategy(r0, r1)
        idx, mean = sample_support(q, U[:, t - 1], grid.points)
        c = Y[idx]
        mu = mean[:, 0]
        # vertex order (1, 0); ties go to 1
        d1 = (1.0 - mu) ** 2
        d0 = (0.0 - mu) ** 2
        a = np.where(d1 >= np.maximum(d1, d0) - 1e-12, 1.0, 0.0)
        # joint bins (side, grid point)
        cnt = jcount[rows, b, idx] + 1.0
        jcount[rows, b, idx] = cnt
        jmean[rows, b, idx] = jmean[rows, b, idx] + (1.0 / cnt) * (a - jmean[rows, b, idx])
        # forecast bins
        cnt = fcount[rows, idx] + 1.0
        fcount[rows, idx] = cnt
        fmean[rows, idx] = fmean[rows, idx] + (1.0 / cnt) * (a - fmean[rows, idx])
        # side bins (Welford)
        cnt = scount[:, b] + 1.0
        delta = a - smean[:, b]
        scount[:, b] = cnt
        smean[:, b] = smean[:, b] + (1.0 / cnt) * delta
        sm2[:, b] += (1.0 * (1.0 - 1.0 / cnt)) * (delta * delta)
        bsum += (a - c) ** 2
        if keep_paths:
            paths_c[:, t - 1] = c
            paths_a[:, t - 1] = a
        if ci < cps.size and t == cps[ci]:
            outB[:, ci] = bsum / t
            outK[:, ci] = np.sum(fcount * (fmean - Y) ** 2, axis=1) / t
            outR[:, ci] = np.sum(sm2, axis=1) / t
            ci += 1
    return CalibratedBatchResult(list(seeds), horizon, cps, outB, outK, outR, paths_c, paths_a)


@dataclass
class LogCalibratedBatchResult:
    seeds: list
    horizon: int
    grid: LogGrid
    L: np.ndarray
    K_log: np.ndarray
    R_log: np.ndarray
    R_log_online: np.ndarray
    forecasts: np.ndarray | None = None


def _xlogx(p):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)


def log_calibrated_batch(seeds, horizon: int, resolution: int = 10, floor=None, keep_paths: bool = False):
    """Log-calibrated forecaster on the 2-simplex against the adversary that
    plays the unit vector farthest from the announced mean forecast."""
    grid = make_log_grid(2, resolution, floor)
    Dpts = grid.points
    logD = np.log(Dpts)
    Dn = Dpts.shape[0]
    S = len(seeds)
    U = np.array([np.random.default_rng(s).random(horizon) for s in seeds])
    g0 = 0.5
    count = np.zeros((S, Dn))
    mean = np.zeros((S, Dn, 2))
    kl_sum = np.zeros(S)
    online_sum = np.zeros(S)
    rows = np.arange(S)
    paths = np.empty((S, horizon), dtype=np.int64) if keep_paths else None
    for t in range(1, horizon + 1):
        G = np.where(count[:, :, None] > 0, (mean * count[:, :, None] + g0) / (count[:, :, None] + 1.0), g0)
        M = np.log(G) - logD[None, :, :]  # (S, D, 2); row k of the game is M[:, :, k]
        q = two_row_min_strategy(M[:, :, 0], M[:, :, 1])
        idx, mu = sample_support(q, U[:, t - 1], Dpts)
        # unit vectors in order (1,0), (0,1); ties go to (1,0)
        d_first = (1.0 - mu[:, 0]) ** 2 + (0.0 - mu[:, 1]) ** 2
        d_second = (0.0 - mu[:, 0]) ** 2 + (1.0 - mu[:, 1]) ** 2
        first = d_first >= np.maximum(d_first, d_second) - 1e-12
        k = np.where(first, 0, 1)
        c = Dpts[idx]
        kl_sum += -np.log(c[rows, k])
        prev = G[rows, idx]
        online_sum += -np.log(prev[rows, k])
        a = np.zeros((S, 2))
        a[rows, k] = 1.0
        cnt = count[rows, idx] + 1.0
        count[rows, idx] = cnt
        mean[rows, idx] = mean[rows, idx] + (1.0 / cnt)[:, None] * (a - mean[rows, idx])
        if keep_paths:
            paths[:, t - 1] = idx
    t = horizon
    # unit-vector actions have zero entropy
    R = np.sum(count * -np.sum(_xlogx(mean), axis=2), axis=1) / t
    with np.errstate(divide="ignore", invalid="ignore"):
        K = np.sum(count * np.sum(_xlogx(mean) - np.where(mean > 0, mean * logD[None], 0.0), axis=2), axis=1) / t
    return LogCalibratedBatchResult(list(seeds), horizon, grid, kl_sum / t, K, R, online_sum / t, paths)


@dataclass
class LowerBoundResult:
    alpha: float
    horizon: int
    seeds: list
    gap: np.ndarray  # B^c - R^b per replication
    abar: np.ndarray  # final action average per replication
    B: np.ndarray
    R: np.ndarray


def lowerbound_batch(alpha: float, horizon: int, seeds) -> LowerBoundResult:
    """Simple calibeating with a constant side forecast (running mean, prior
    1/2) against the beta-binomial source, one replication per seed."""
    S = len(seeds)
    U = np.array([np.random.default_rng(s).random(horizon) for s in seeds])
    succ = np.zeros(S)
    mean = np.zeros(S)
    m2 = np.zeros(S)
    bsum = np.zeros(S)
    for t in range(1, horizon + 1):
        p = (succ + alpha) / ((t - 1) + 2.0 * alpha)
        a = np.where(U[:, t - 1] < p, 1.0, 0.0)
        c = mean if t > 1 else np.full(S, 0.5)
        bsum += (a - c) ** 2
        delta = a - mean
        mean = mean + (1.0 / t) * delta
        m2 += (1.0 * (1.0 - 1.0 / t)) * (delta * delta)
        succ += a
    B = bsum / horizon
    R = m2 / horizon
    return LowerBoundResult(alpha, horizon, list(seeds), B - R, mean, B, R)
