"""Score ledgers for one (action, forecast) stream.

Quadratic flavor: Brier score B, calibration K (l2 and l1 versions),
refinement R and online refinement R~.  Logarithmic flavor: the KL-based
analogues.  Fractional flavor: joint scores under a fractional binning of the
errors a - c.

Final scores are recomputed from the stored stream and bin tables; the
``running_*`` accessors are O(1) per step and are what traces use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .binning import BinTable, FractionalBinning, HatFunctions


def forecast_key(c) -> tuple:
    """Exact bin key of a forecast given as floats."""
    return tuple(float(v) for v in np.asarray(c, dtype=float).ravel())


def _flat(v, dim: int) -> list:
    """Flat float list of length ``dim``; raises on a dimension mismatch."""
    if not (isinstance(v, np.ndarray) and v.dtype == np.float64):
        v = np.asarray(v, dtype=float)
    if v.size != dim:
        raise ValueError(f"dimension mismatch: expected {dim}")
    return v.ravel().tolist()


def _scalar(v) -> float:
    if isinstance(v, (float, int, np.floating, np.integer)):
        return float(v)
    return float(np.asarray(v).ravel()[0])


def _sqdist(x, y) -> float:
    total = 0.0
    for xi, yi in zip(x, y):
        d = xi - yi
        total += d * d
    return total


class StepDelta(NamedTuple):
    sq_err: float
    online_term: float


@dataclass(frozen=True)
class Relabeling:
    score: float
    relabeling: dict


class _Stream:
    """Stored (action, forecast) stream, kept as flat float lists so that a
    long stream adds no per-record containers."""

    dim: int

    @property
    def actions(self) -> np.ndarray:
        return np.array(self._a).reshape(-1, self.dim)

    @property
    def forecasts(self) -> np.ndarray:
        return np.array(self._c).reshape(-1, self.dim)


class ScoreLedger(_Stream):
    """Quadratic scores of a stream binned by forecast (or by supplied keys
    that are in one-to-one correspondence with forecasts)."""

    def __init__(self, dim: int, prior=None):
        self.dim = dim
        self.prior = np.full(dim, 0.5) if prior is None else np.asarray(prior, dtype=float)
        self.table = BinTable(dim, prior=self.prior)
        self.labels: dict = {}
        self._label_lists: dict = {}
        self._contrib: dict = {}
        self._a: list = []
        self._c: list = []
        self.keys: list = []
        self.t = 0
        self._brier = 0.0
        self._cal2 = 0.0
        self._cal1 = 0.0

    def record(self, a, c, key=None) -> StepDelta:
        a, c = _flat(a, self.dim), _flat(c, self.dim)
        if key is None:
            key = tuple(c)
        label = self._label_lists.get(key)
        if label is None:
            self._label_lists[key] = c
            self.labels[key] = np.array(c)
            old2 = old1 = 0.0
        else:
            if label != c:
                raise ValueError(f"bin {key!r} already carries forecast {label}, got {c}")
            old2, old1 = self._contrib[key]
        prev, _ = self.table.observe_list(key, a)
        s = self.table.stats[key]
        e2 = _sqdist(s.mu, c)
        new2, new1 = s.count * e2, s.count * math.sqrt(e2)
        self._contrib[key] = (new2, new1)
        self._cal2 += new2 - old2
        self._cal1 += new1 - old1
        sq = _sqdist(a, c)
        self._brier += sq
        self._a.extend(a)
        self._c.extend(c)
        self.keys.append(key)
        self.t += 1
        return StepDelta(sq, _sqdist(a, prev))

    def _need(self):
        if self.t == 0:
            raise ValueError("empty ledger")

    # running (O(1)) versions, used for per-period traces
    def running_brier(self) -> float:
        return self._brier / self.t

    def running_calibration_l2(self) -> float:
        return max(self._cal2, 0.0) / self.t

    def running_calibration_l1(self) -> float:
        return max(self._cal1, 0.0) / self.t

    def running_refinement(self) -> float:
        return max(self.table.running_m2, 0.0) / self.t

    def running_online_refinement(self) -> float:
        return self.table.running_online / self.t

    # exact final scores
    def brier(self) -> float:
        self._need()
        A = np.asarray(self.actions)
        C = np.asarray(self.forecasts)
        return math.fsum(np.sum((A - C) ** 2, axis=1)) / self.t

    def calibration_l2(self) -> float:
        self._need()
        terms = []
        for key, s in self.table.items():
            e = s.mean - self.labels[key]
            terms.append(s.count * float(e @ e))
        return math.fsum(terms) / self.t

    def calibration_l1(self) -> float:
        self._need()
        terms = []
        for key, s in self.table.items():
            e = s.mean - self.labels[key]
            terms.append(s.count * math.sqrt(float(e @ e)))
        return math.fsum(terms) / self.t

    def refinement(self) -> float:
        self._need()
        return self.table.refinement()

    def online_refinement(self) -> float:
        self._need()
        return self.table.online_refinement()

    def distinct_bins(self) -> int:
        return len(self.table)

    def decomposition_residual(self) -> float:
        return self.brier() - self.refinement() - self.calibration_l2()

    def relabel_min_brier(self) -> Relabeling:
        """Minimal Brier score over relabelings of the bins; attained by
        relabeling every bin with its action average."""
        self._need()
        phi = {key: s.mean.copy() for key, s in self.table.items()}
        A = np.asarray(self.actions)
        relabeled = np.array([phi[k] for k in self.keys])
        score = math.fsum(np.sum((A - relabeled) ** 2, axis=1)) / self.t
        return Relabeling(score, phi)

    def summary(self) -> dict:
        return {
            "t": self.t,
            "B": self.brier(),
            "K_l2": self.calibration_l2(),
            "K_l1": self.calibration_l1(),
            "R": self.refinement(),
            "R_online": self.online_refinement(),
            "N_bins": self.distinct_bins(),
            "residual": self.decomposition_residual(),
        }


def brier(ledger: ScoreLedger) -> float:
    return ledger.brier()


def calibration_l2(ledger: ScoreLedger) -> float:
    return ledger.calibration_l2()


def calibration_l1(ledger: ScoreLedger) -> float:
    return ledger.calibration_l1()


def refinement(ledger: ScoreLedger) -> float:
    return ledger.refinement()


def online_refinement(ledger: ScoreLedger) -> float:
    return ledger.online_refinement()


def relabel_min_brier(ledger: ScoreLedger) -> Relabeling:
    return ledger.relabel_min_brier()


# logarithmic flavor

def _floats(v) -> list:
    if isinstance(v, list):
        return v
    return np.asarray(v, dtype=float).ravel().tolist()


def _xent(a: list, c: list) -> float:
    total = 0.0
    for ai, ci in zip(a, c):
        if ai > 0:
            if ci <= 0:
                return math.inf
            total -= ai * math.log(ci)
    return total


def _kl(a: list, c: list) -> float:
    total = 0.0
    for ai, ci in zip(a, c):
        if ai > 0:
            if ci <= 0:
                return math.inf
            total += ai * math.log(ai / ci)
    return total


def _log_terms(a: list, c: list, prev: list, mu: list) -> tuple:
    """H(mu), D(mu||c), D(a||c), D(a||prev), H(a) in one pass; each sum is
    accumulated in the same order as the standalone functions."""
    h_mu = d_mu = d_a = d_p = h_a = 0.0
    for aj, cj, pj, mj in zip(a, c, prev, mu):
        if mj > 0:
            if cj <= 0:
                d_mu = math.inf
            else:
                d_mu += mj * math.log(mj / cj)
            h_mu -= mj * math.log(mj)
        if aj > 0:
            if cj <= 0:
                d_a = math.inf
            else:
                d_a += aj * math.log(aj / cj)
            if pj <= 0:
                d_p = math.inf
            else:
                d_p += aj * math.log(aj / pj)
            h_a -= aj * math.log(aj)
    return h_mu, d_mu, d_a, d_p, h_a


def cross_entropy(a, c) -> float:
    """-sum a_i log c_i with 0 log 0 = 0; +inf when c_i = 0 < a_i."""
    return _xent(_floats(a), _floats(c))


def entropy(a) -> float:
    a = _floats(a)
    return _xent(a, a)


def kl(a, c) -> float:
    """Relative entropy D(a||c)."""
    return _kl(_floats(a), _floats(c))


@dataclass(frozen=True)
class LogScores:
    L: float
    R_log: float
    K_log: float
    H: float
    online_R_log: float

    @property
    def residual(self) -> float:
        return self.L - self.R_log - self.K_log


class LogScoreLedger(_Stream):
    """KL-based scores on the simplex.  Bins use the regularizer g0 = uniform,
    so online terms compare each action with a strictly positive average."""

    def __init__(self, dim: int):
        self.dim = dim
        g0 = np.full(dim, 1.0 / dim)
        self.table = BinTable(dim, prior=g0, regularizer=g0)
        self.labels: dict = {}
        self._label_lists: dict = {}
        self._a: list = []
        self._c: list = []
        self.keys: list = []
        self.t = 0
        self._kl = 0.0
        self._online = 0.0
        self._online_terms: list = []
        self._entropy = 0.0
        self._nH = 0.0
        self._nD = 0.0
        self._contrib: dict = {}

    def record(self, a, c, key=None) -> StepDelta:
        a, c = _flat(a, self.dim), _flat(c, self.dim)
        if key is None:
            key = tuple(c)
        label = self._label_lists.get(key)
        if label is None:
            self._label_lists[key] = c
            self.labels[key] = np.array(c)
        elif label != c:
            raise ValueError(f"bin {key!r} already carries forecast {label}, got {c}")
        old_h, old_d = self._contrib.get(key, (0.0, 0.0))
        prev, _ = self.table.observe_list(key, a)
        st = self.table.stats[key]
        h_bin, d_bin, d, on, h = _log_terms(a, c, prev, st.mu)
        h_bin *= st.count
        d_bin *= st.count
        self._contrib[key] = (h_bin, d_bin)
        self._nH += h_bin - old_h
        self._nD += d_bin - old_d
        self._kl += d
        self._online += on
        self._online_terms.append(on)
        self._entropy += h
        self._a.extend(a)
        self._c.extend(c)
        self.keys.append(key)
        self.t += 1
        return StepDelta(d, on)

    def running_L(self) -> float:
        return self._kl / self.t

    def running_online_R(self) -> float:
        return self._online / self.t

    def running_R(self) -> float:
        return (self._nH - self._entropy) / self.t

    def running_K(self) -> float:
        return self._nD / self.t

    def scores(self) -> LogScores:
        if self.t == 0:
            raise ValueError("empty ledger")
        t = self.t
        A, C = self.actions.tolist(), self.forecasts.tolist()
        L = math.fsum(_kl(a, c) for a, c in zip(A, C)) / t
        H = math.fsum(_xent(a, a) for a in A) / t
        r_terms, k_terms = [], []
        for key, s in self.table.items():
            r_terms.append(s.count * entropy(s.mean))
            k_terms.append(s.count * kl(s.mean, self.labels[key]))
        R = math.fsum(r_terms) / t - H
        K = math.fsum(k_terms) / t
        return LogScores(L, R, K, H, math.fsum(self._online_terms) / t)


def log_scores(ledger: LogScoreLedger) -> LogScores:
    return ledger.scores()


# fractional flavor

@dataclass(frozen=True)
class FractionalScores:
    B: float
    K_joint: float
    R_joint: float
    online_R_joint: float

    @property
    def residual(self) -> float:
        return self.B - self.R_joint - self.K_joint


class FractionalLedger:
    """Scores of a 1-D stream under the joint binning (b, i), where bin
    (b, i) collects the errors z = a - c with weight 1{b_s = b} w_i(c_s)."""

    def __init__(self, weight_functions: HatFunctions):
        self.binning = FractionalBinning(weight_functions, dim=1)
        self.t = 0
        self.sq_errs: list = []
        self._online = 0.0
        self._sq = 0.0

    @property
    def table(self) -> BinTable:
        return self.binning.table

    def record(self, a, c, b_key=None) -> StepDelta:
        a, c = _scalar(a), _scalar(c)
        z = a - c
        on = 0.0
        for _, lam, prev, _ in self.binning.observe_weighted_list(b_key, c, [z]):
            on += lam * (z - prev[0]) ** 2
        self._online += on
        sq = z * z
        self.sq_errs.append(sq)
        self._sq += sq
        self.t += 1
        return StepDelta(sq, on)

    def running_brier(self) -> float:
        return self._sq / self.t

    def scores(self) -> FractionalScores:
        if self.t == 0:
            raise ValueError("empty ledger")
        t = self.t
        k_terms = [s.count * float(s.mean @ s.mean) for s in self.table.stats.values()]
        r_terms = [s.m2 for s in self.table.stats.values()]
        return FractionalScores(
            math.fsum(self.sq_errs) / t,
            math.fsum(k_terms) / t,
            math.fsum(r_terms) / t,
            math.fsum(s.online_sq_sum for s in self.table.stats.values()) / t,
        )


def fractional_scores(ledger: FractionalLedger) -> FractionalScores:
    return ledger.scores()


def refinement_by_keys(actions, keys, dim: int | None = None) -> float:
    """Refinement score of an action stream under an arbitrary key stream."""
    actions = np.asarray(actions, dtype=float)
    if actions.ndim == 1:
        actions = actions[:, None]
    table = BinTable(actions.shape[1] if dim is None else dim)
    for a, k in zip(actions, keys):
        table.observe(k, a)
    return table.refinement()


class KeyedRefinement:
    """Refinement of an action stream binned by arbitrary keys (typically a
    side forecast), quadratic or logarithmic, with O(1) running values."""

    def __init__(self, dim: int, flavor: str = "quadratic", prior=None):
        if flavor not in ("quadratic", "log"):
            raise ValueError("flavor must be 'quadratic' or 'log'")
        self.flavor = flavor
        if flavor == "log":
            g0 = np.full(dim, 1.0 / dim)
            self.table = BinTable(dim, prior=g0, regularizer=g0)
        else:
            self.table = BinTable(dim, prior=np.full(dim, 0.5) if prior is None else prior)
        self.t = 0
        self._nH = 0.0
        self._entropy = 0.0

    def record(self, a, key) -> None:
        a = _flat(a, self.table.dim)
        if self.flavor == "log":
            st = self.table.stats.get(key)
            if st is not None:
                self._nH -= st.count * entropy(st.mu)
            self.table.observe_list(key, a)
            st = self.table.stats[key]
            self._nH += st.count * entropy(st.mu)
            self._entropy += entropy(a)
        else:
            self.table.observe_list(key, a)
        self.t += 1

    def running(self) -> float:
        if self.flavor == "log":
            return (self._nH - self._entropy) / self.t
        return max(self.table.running_m2, 0.0) / self.t

    def final(self) -> float:
        if self.flavor == "log":
            nh = math.fsum(s.count * entropy(s.mean) for s in self.table.stats.values())
            return (nh - self._entropy) / self.t
        return self.table.refinement()

    def n_bins(self) -> int:
        return len(self.table)
