"""Bin bookkeeping: counts, running averages and exact online variances.

Every bin keeps a Welford-style accumulator, so the within-bin sum of squared
deviations is updated in O(m) per observation and agrees with the offline
recomputation up to round-off.  Weighted (fractional) observations use the
weighted generalization of the same recursion.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Callable, Hashable

import numpy as np

BinKey = Hashable

MIN_WEIGHT = 1e-15


class JointKey(tuple):
    """Key of a joint binning.  Nested joint keys are flattened, so joining is
    associative: ``joint_key([joint_key([a, b]), c]) == joint_key([a, b, c])``."""

    __slots__ = ()

    def __repr__(self) -> str:
        return f"JointKey{tuple.__repr__(self)}"


def joint_key(keys) -> JointKey:
    keys = list(keys)
    if not keys:
        raise ValueError("joint_key needs at least one key")
    flat = []
    for k in keys:
        if isinstance(k, JointKey):
            flat.extend(k)
        else:
            flat.append(k)
    return JointKey(flat)


@dataclass(frozen=True)
class UpdateReceipt:
    prev_average: np.ndarray
    prev_count: float


def as_floats(value, dim: int) -> list:
    """Flat list of ``dim`` floats."""
    if isinstance(value, np.ndarray) and value.size == dim:
        return value.ravel().tolist()
    return np.asarray(value, dtype=float).reshape(dim).tolist()


class BinStats:
    """Weighted count, running mean, sum of squared deviations (``m2``) and
    the online sum of squared one-step-ahead errors.  The mean is held as a
    list of floats (``mu``); per-observation work is plain scalar arithmetic."""

    __slots__ = ("count", "mu", "m2", "online_sq_sum")

    def __init__(self, dim: int):
        self.count = 0.0
        self.mu = [0.0] * dim
        self.m2 = 0.0
        self.online_sq_sum = 0.0

    @property
    def mean(self) -> np.ndarray:
        return np.array(self.mu)

    @property
    def total(self) -> np.ndarray:
        return self.mean * self.count

    @property
    def variance(self) -> float:
        return self.m2 / self.count if self.count > 0 else 0.0

    def update(self, x, weight: float, prev_average) -> float:
        """Apply one (weighted) observation; returns the m2 increment."""
        self.count += weight
        r = weight / self.count
        mu = self.mu
        sq = err = 0.0
        for j, xj in enumerate(x):
            d = xj - mu[j]
            mu[j] += r * d
            sq += d * d
            e = xj - prev_average[j]
            err += e * e
        inc = weight * (1.0 - r) * sq
        self.m2 += inc
        self.online_sq_sum += weight * err
        return inc


class BinTable:
    """Map from bin key to :class:`BinStats`.

    ``prior`` is returned as the average of an empty bin.  With a
    ``regularizer`` g0 the table reports the regularized average
    (sum + g0) / (count + 1) instead, which is strictly positive whenever g0 is.
    """

    def __init__(self, dim: int, prior=None, regularizer=None):
        self.dim = dim
        self.prior = np.zeros(dim) if prior is None else np.asarray(prior, dtype=float).copy()
        self.regularizer = None if regularizer is None else np.asarray(regularizer, dtype=float).copy()
        self._prior = self.prior.tolist()
        self._reg = None if self.regularizer is None else self.regularizer.tolist()
        self.stats: dict = {}
        self.total_count = 0.0
        self.running_m2 = 0.0
        self.running_online = 0.0

    def __contains__(self, key) -> bool:
        return key in self.stats

    def __len__(self) -> int:
        return len(self.stats)

    def keys(self):
        return self.stats.keys()

    def items(self):
        return self.stats.items()

    def count(self, key) -> float:
        s = self.stats.get(key)
        return 0.0 if s is None else s.count

    def raw_average(self, key) -> np.ndarray:
        """Plain bin average (prior when empty), ignoring any regularizer."""
        s = self.stats.get(key)
        if s is None or s.count == 0:
            return self.prior.copy()
        return s.mean

    def average(self, key) -> np.ndarray:
        return np.array(self.average_list(key))

    def average_list(self, key) -> list:
        s = self.stats.get(key)
        if self._reg is not None:
            if s is None:
                return list(self._reg)
            n = s.count
            return [(m * n + g) / (n + 1.0) for m, g in zip(s.mu, self._reg)]
        if s is None or s.count == 0:
            return list(self._prior)
        return list(s.mu)

    def observe(self, key, value, weight: float = 1.0) -> UpdateReceipt:
        prev, prev_count = self.observe_list(key, as_floats(value, self.dim), weight)
        return UpdateReceipt(np.array(prev), prev_count)

    def observe_list(self, key, x: list, weight: float = 1.0) -> tuple[list, float]:
        """Fast path of :meth:`observe` taking and returning float lists."""
        for v in x:
            if not math.isfinite(v):
                raise ValueError("observed value is not finite")
        if not 0.0 <= weight <= 1.0:
            raise ValueError(f"weight {weight} outside [0, 1]")
        s = self.stats.get(key)
        if s is None:
            prev, prev_count = list(self._prior if self._reg is None else self._reg), 0.0
        else:
            prev_count = n = s.count
            if self._reg is not None:
                prev = [(m * n + g) / (n + 1.0) for m, g in zip(s.mu, self._reg)]
            elif n == 0:
                prev = list(self._prior)
            else:
                prev = s.mu[:]
        if weight < MIN_WEIGHT:
            return prev, prev_count
        if s is None:
            s = self.stats[key] = BinStats(self.dim)
        before = s.online_sq_sum
        self.running_m2 += s.update(x, weight, prev)
        self.running_online += s.online_sq_sum - before
        self.total_count += weight
        return prev, prev_count

    def refinement(self) -> float:
        """Sum over bins of m2, divided by the total weight."""
        if self.total_count == 0:
            raise ValueError("empty table")
        return math.fsum(s.m2 for s in self.stats.values()) / self.total_count

    def online_refinement(self) -> float:
        if self.total_count == 0:
            raise ValueError("empty table")
        return math.fsum(s.online_sq_sum for s in self.stats.values()) / self.total_count


def observe(table: BinTable, key, value) -> UpdateReceipt:
    return table.observe(key, value)


def average(table: BinTable, key) -> np.ndarray:
    return table.average(key)


class HatFunctions:
    """Piecewise-linear tents on a 1-D grid d_0 < ... < d_K; they form a
    continuous partition of unity on [d_0, d_K] (constant beyond the ends)."""

    def __init__(self, nodes):
        nodes = np.asarray(nodes, dtype=float).ravel()
        if nodes.size < 1 or np.any(np.diff(nodes) <= 0):
            raise ValueError("hat nodes must be strictly increasing")
        self.nodes = nodes
        self._nodes = nodes.tolist()

    def __len__(self) -> int:
        return self.nodes.size

    def weights(self, c: float) -> np.ndarray:
        w = np.zeros(self.nodes.size)
        for i, v in self.active(c):
            w[i] = v
        return w

    def active(self, c: float) -> list[tuple[int, float]]:
        """Nonzero (index, weight) pairs at ``c``."""
        d = self._nodes
        if len(d) == 1 or c <= d[0]:
            return [(0, 1.0)]
        if c >= d[-1]:
            return [(len(d) - 1, 1.0)]
        k = bisect.bisect_right(d, c) - 1
        left = (d[k + 1] - c) / (d[k + 1] - d[k])
        return [(i, v) for i, v in ((k, left), (k + 1, 1.0 - left)) if v != 0.0]


class FractionalBinning:
    """Fractional binning: bin (b, i) receives weight w_i(c) from an
    observation made under side forecast b and forecast c.  Empty bins
    report a zero average."""

    def __init__(self, weight_functions: HatFunctions, dim: int = 1):
        self.weight_functions = weight_functions
        self.table = BinTable(dim, prior=np.zeros(dim))

    def weights(self, c) -> np.ndarray:
        return self.weight_functions.weights(float(np.asarray(c).ravel()[0]))

    def average(self, b_key, i: int) -> np.ndarray:
        return self.table.average((b_key, i))

    def observe_weighted(self, b_key, forecast, value) -> list[tuple[int, UpdateReceipt]]:
        x = as_floats(value, self.table.dim)
        c = float(np.asarray(forecast).ravel()[0])
        return [
            (i, UpdateReceipt(np.array(prev), n))
            for i, _, prev, n in self.observe_weighted_list(b_key, c, x)
        ]

    def observe_weighted_list(self, b_key, c: float, x: list) -> list[tuple[int, float, list, float]]:
        """Fast path: returns (index, weight, previous average, previous count)."""
        out = []
        for i, lam in self.weight_functions.active(c):
            if not -1e-15 <= lam <= 1 + 1e-15:
                raise ValueError("weight outside [0, 1]")
            if lam >= MIN_WEIGHT:
                prev, n = self.table.observe_list((b_key, i), x, lam)
                out.append((i, lam, prev, n))
        return out


def observe_weighted(binning: FractionalBinning, b_key, forecast, value):
    return binning.observe_weighted(b_key, forecast, value)


@dataclass(frozen=True)
class CoarseningCheck:
    is_coarsening: bool
    r_fine: float
    r_coarse: float


def refinement_of(table_fine: BinTable, table_coarse: BinTable, phi: Callable | dict) -> CoarseningCheck:
    """Check that ``table_coarse`` is the image of ``table_fine`` under the
    key map ``phi`` and report both refinement scores."""
    if abs(table_fine.total_count - table_coarse.total_count) > 1e-9:
        raise ValueError("tables were built from streams of different lengths")
    mapper = phi.__getitem__ if isinstance(phi, dict) else phi
    agg: dict = {}
    for key, s in table_fine.items():
        ck = mapper(key)
        n, tot = agg.get(ck, (0.0, np.zeros(table_fine.dim)))
        agg[ck] = (n + s.count, tot + s.total)
    ok = set(agg) == {k for k, s in table_coarse.items() if s.count > 0}
    if ok:
        for ck, (n, tot) in agg.items():
            s = table_coarse.stats[ck]
            if abs(n - s.count) > 1e-9 or np.max(np.abs(tot - s.total)) > 1e-9:
                ok = False
                break
    return CoarseningCheck(ok, table_fine.refinement(), table_coarse.refinement())
