"""Action sources and side-forecast generators.

Oblivious sources fix a_t without looking at the current forecast; the driver
never hands them the decision.  Adaptive sources receive the decision of the
current period before choosing a_t.
"""

from __future__ import annotations

import numpy as np

from .geometry import Space


class ActionSource:
    adaptive = False

    def next_action(self, decision=None) -> np.ndarray:
        raise NotImplementedError


class PatternSource(ActionSource):
    """Cycles through a fixed list of actions."""

    def __init__(self, pattern, space: Space | None = None):
        pat = [np.atleast_1d(np.asarray(p, dtype=float)) for p in pattern]
        if not pat:
            raise ValueError("pattern must be nonempty")
        if space is not None:
            acts = {tuple(a) for a in space.actions}
            for p in pat:
                if tuple(p) not in acts:
                    raise ValueError(f"pattern element {p} is not an action")
        self.pattern = pat
        self.t = 0

    def next_action(self, decision=None):
        a = self.pattern[self.t % len(self.pattern)]
        self.t += 1
        return a.copy()


class IIDSource(ActionSource):
    """I.i.d. actions.  For m = 1, ``p`` is the probability of action 1;
    otherwise ``p`` is a probability vector over ``space.actions``."""

    def __init__(self, p, space: Space, seed: int = 0):
        self.space = space
        self.rng = np.random.default_rng(seed)
        p = np.atleast_1d(np.asarray(p, dtype=float))
        if space.dim == 1 and p.size == 1:
            if not 0.0 <= p[0] <= 1.0:
                raise ValueError("probability outside [0, 1]")
            acts = np.array([[0.0], [1.0]])
            probs = np.array([1.0 - p[0], p[0]])
        else:
            acts = np.asarray(space.actions)
            probs = p
            if probs.size != len(acts) or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
                raise ValueError("p must be a probability vector over the actions")
        self.actions = acts
        self.cdf = np.cumsum(probs)

    def next_action(self, decision=None):
        u = self.rng.random()
        k = min(int(np.searchsorted(self.cdf, u, side="right")), len(self.actions) - 1)
        return self.actions[k].copy()


class BetaBinomialSource(ActionSource):
    """Exchangeable 0/1 actions with a Beta(alpha, alpha) mixing law, sampled
    sequentially as a Polya urn: P(a_{t+1} = 1 | history) = (k + alpha) / (t + 2 alpha)."""

    def __init__(self, alpha: float, seed: int = 0):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.alpha = float(alpha)
        self.rng = np.random.default_rng(seed)
        self.successes = 0
        self.trials = 0

    @property
    def posterior_mean(self) -> float:
        return (self.successes + self.alpha) / (self.trials + 2.0 * self.alpha)

    def next_action(self, decision=None):
        a = 1.0 if self.rng.random() < self.posterior_mean else 0.0
        self.successes += int(a)
        self.trials += 1
        return np.array([a])


def beta_binomial_lambda(alpha: float) -> float:
    return alpha / (2.0 * (2.0 * alpha + 1.0))


class AdaptiveWorstCase(ActionSource):
    """Plays the extreme point of C farthest from the forecast.

    ``mode="realized"`` targets the forecast actually announced this period.
    ``mode="announced"`` targets the mean of the forecaster's randomization
    when it has one (the adversary sees the mixed strategy but not the draw),
    and the forecast otherwise.  Ties go to the lexicographically largest
    vertex.
    """

    adaptive = True

    def __init__(self, space: Space, mode: str = "realized"):
        if mode not in ("realized", "announced"):
            raise ValueError("mode must be 'realized' or 'announced'")
        self.space = space
        self.mode = mode
        verts = np.asarray(space.vertices)
        order = np.lexsort(verts.T[::-1])[::-1]  # lexicographically descending
        self.vertices = verts[order]

    def target(self, decision) -> np.ndarray:
        if self.mode == "announced" and decision.distribution is not None:
            return decision.distribution.mean
        return np.asarray(decision.forecast, dtype=float)

    def next_action(self, decision=None):
        if decision is None:
            raise ValueError("adaptive source needs the current decision")
        c = self.target(decision)
        d2 = np.sum((self.vertices - c) ** 2, axis=1)
        k = int(np.nonzero(d2 >= d2.max() - 1e-12)[0][0])
        return self.vertices[k].copy()


def pattern_source(pattern, space: Space | None = None) -> PatternSource:
    return PatternSource(pattern, space)


def iid_source(p, space: Space, seed: int = 0) -> IIDSource:
    return IIDSource(p, space, seed)


def beta_binomial_source(alpha: float, seed: int = 0) -> BetaBinomialSource:
    return BetaBinomialSource(alpha, seed)


def adaptive_worst_case(space: Space, mode: str = "realized") -> AdaptiveWorstCase:
    return AdaptiveWorstCase(space, mode)


# side forecasts


class SideSource:
    """Produces the side forecast b_t.  ``needs_action`` sources are experts
    that see the upcoming action; they can only be paired with oblivious
    action sources."""

    needs_action = False

    def next_side(self, t: int, action=None):
        raise NotImplementedError


class ConstantSide(SideSource):
    def __init__(self, label="b"):
        self.label = label

    def next_side(self, t, action=None):
        return self.label


class CyclicSide(SideSource):
    """Label t mod period (period 2 is day parity)."""

    def __init__(self, period: int):
        if period < 1:
            raise ValueError("period must be positive")
        self.period = period

    def next_side(self, t, action=None):
        return (t - 1) % self.period


class RandomSide(SideSource):
    def __init__(self, n_labels: int, seed: int = 0):
        self.n_labels = n_labels
        self.rng = np.random.default_rng(seed)

    def next_side(self, t, action=None):
        return int(self.rng.integers(self.n_labels))


class ActionExpert(SideSource):
    """Expert that sees a_t: ``perfect`` reports it, ``anti`` reports its
    mirror image (1 - a in each coordinate), ``noisy`` reports it with
    probability 1 - flip and the mirror image otherwise."""

    needs_action = True

    def __init__(self, kind: str = "perfect", flip: float = 0.2, seed: int = 0):
        if kind not in ("perfect", "anti", "noisy"):
            raise ValueError(f"unknown expert kind {kind!r}")
        self.kind = kind
        self.flip = flip
        self.rng = np.random.default_rng(seed)

    def next_side(self, t, action=None):
        if action is None:
            raise ValueError("this expert needs the upcoming action")
        a = tuple(float(v) for v in np.asarray(action).ravel())
        mirror = tuple(1.0 - v for v in a)
        if self.kind == "perfect":
            return a
        if self.kind == "anti":
            return mirror
        return mirror if self.rng.random() < self.flip else a
