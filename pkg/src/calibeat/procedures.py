"""Online forecasting procedures behind one interface.

Each period the driver calls ``next(side)`` with the current side forecasts,
receives a :class:`ForecastDecision`, and then calls ``update(a)`` with the
realized action.  Procedures never see a_t before committing to c_t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .binning import BinTable, FractionalBinning, HatFunctions, joint_key
from .geometry import Grid, LogGrid, Space, make_grid, min_bounding_radius, project
from .scores import forecast_key
from .solvers import (
    OutgoingDistribution,
    outgoing_fixed_point_1d,
    outgoing_mm,
    outgoing_mm_log,
)


@dataclass(frozen=True)
class ForecastDecision:
    forecast: np.ndarray
    key: object
    distribution: OutgoingDistribution | None = None
    rng_draw: float | None = None


def _one_side(side):
    if side is None:
        raise ValueError("this procedure needs a side forecast every period")
    if isinstance(side, list):
        if len(side) != 1:
            raise ValueError("expected exactly one side forecast")
        return side[0]
    return side


def _many_sides(side, n: int | None) -> list:
    if side is None or not isinstance(side, (list, tuple)):
        raise ValueError("expected a list of side forecasts")
    side = list(side)
    if n is not None and len(side) != n:
        raise ValueError(f"expected {n} side forecasts, got {len(side)}")
    return side


class Forecaster:
    """Base class: enforces strict next/update alternation."""

    stochastic = False
    name = "forecaster"

    def __init__(self, space: Space):
        self.space = space
        self.t = 0
        self._pending: ForecastDecision | None = None

    def next(self, side=None) -> ForecastDecision:
        if self._pending is not None:
            raise RuntimeError("next() called twice without update()")
        dec = self._decide(side)
        self._pending = dec
        return dec

    def update(self, a) -> None:
        if self._pending is None:
            raise RuntimeError("update() called before next()")
        a = np.asarray(a, dtype=float).reshape(self.space.dim)
        self._learn(self._pending, a)
        self._pending = None
        self.t += 1

    def _decide(self, side) -> ForecastDecision:
        raise NotImplementedError

    def _learn(self, decision: ForecastDecision, a: np.ndarray) -> None:
        raise NotImplementedError


class SimpleCalibeat(Forecaster):
    """Forecast the running action average of the current side-forecast bin.

    With ``round_to`` the forecast is rounded to the nearest grid point, which
    costs at most 2 * gamma * delta extra in the Brier score.
    """

    name = "simple_calibeat"

    def __init__(self, space: Space, prior=None, round_to: Grid | None = None):
        super().__init__(space)
        self.table = BinTable(space.dim, prior=space.centroid if prior is None else prior)
        self.round_to = round_to
        self._b = None

    @property
    def bound_extra(self) -> float:
        if self.round_to is None:
            return 0.0
        return 2.0 * self.space.diameter * self.round_to.delta

    def _key(self, side):
        return _one_side(side)

    def _decide(self, side):
        b = self._key(side)
        self._b = b
        c = self.table.average(b)
        if self.round_to is not None:
            i = self.round_to.nearest(c)
            return ForecastDecision(self.round_to.points[i].copy(), self.round_to.key(i))
        return ForecastDecision(c, forecast_key(c))

    def _learn(self, decision, a):
        self.table.observe(self._b, a)


class MultiSimple(SimpleCalibeat):
    """Simple calibeating on the joint key of all N side forecasts."""

    name = "multi_simple"

    def __init__(self, space: Space, n_experts: int | None = None, prior=None):
        super().__init__(space, prior=prior)
        self.n_experts = n_experts

    def _key(self, side):
        return joint_key(_many_sides(side, self.n_experts))


class CenteredCalibeat(Forecaster):
    """Shrink the bin average toward the center c0 of the smallest bounding
    ball, with weight 1/n on c0 where n counts the current period."""

    name = "centered_calibeat"

    def __init__(self, space: Space):
        super().__init__(space)
        self.radius, self.center = min_bounding_radius(space)
        self.table = BinTable(space.dim, prior=self.center)
        self._b = None

    def _decide(self, side):
        b = _one_side(side)
        self._b = b
        n = self.table.count(b) + 1.0
        if n == 1.0:
            c = self.center.copy()
        else:
            c = (1.0 - 1.0 / n) * self.table.average(b) + (1.0 / n) * self.center
        return ForecastDecision(c, forecast_key(c))

    def _learn(self, decision, a):
        self.table.observe(self._b, a)


def sqrt_grid_schedule(space: Space) -> Callable[[int], Grid]:
    """Grids with about ceil(sqrt(t)) points per axis at period t."""
    cache: dict = {}

    def schedule(t: int) -> Grid:
        k = max(1, math.ceil(math.sqrt(t)) - 1)
        if k not in cache:
            cache[k] = make_grid(space, k)
        return cache[k]

    return schedule


class CalibratedForecaster(Forecaster):
    """Randomized forecaster over a finite grid: each period it maps every grid
    point d to g(d) = average action of the periods in which d was forecast,
    and samples from the outgoing distribution of that map."""

    stochastic = True
    name = "calibrated"

    def __init__(
        self,
        space: Space,
        grid: Grid,
        seed: int = 0,
        prior=None,
        schedule: Callable[[int], Grid] | None = None,
    ):
        super().__init__(space)
        self.grid = grid
        self.schedule = schedule
        self.rng = np.random.default_rng(seed)
        self.table = BinTable(space.dim, prior=space.centroid if prior is None else prior)
        self._key = None

    def _grid_key(self, grid: Grid, i: int):
        if self.schedule is None:
            return grid.key(i)
        # exact rationals so equal points of different grids share a bin
        return tuple(Fraction(int(v), grid.resolution) for v in grid.lattice[i])

    def _bin(self, side, gkey):
        return gkey

    def _decide(self, side):
        grid = self.schedule(self.t + 1) if self.schedule is not None else self.grid
        self.grid = grid
        keys = [self._bin(side, self._grid_key(grid, i)) for i in range(len(grid))]
        G = np.array([self.table.average(k) for k in keys])
        eta = outgoing_mm(G, grid, self.space)
        u = float(self.rng.random())
        i = eta.sample(u)
        self._key = keys[i]
        return ForecastDecision(grid.points[i].copy(), self._grid_key(grid, i), eta, u)

    def _learn(self, decision, a):
        self.table.observe(self._key, a)


class CalibratedCalibeat(CalibratedForecaster):
    """Calibrated forecaster run on the joint (side forecast, grid point) bins."""

    name = "calibrated_calibeat"

    def _bin(self, side, gkey):
        return joint_key([_one_side(side), gkey])


class ContinuousCalibeat1D(Forecaster):
    """Deterministic forecaster on [0, 1] that is calibrated with respect to
    a fractional binning by hat functions, jointly with the side forecast.

    Each period it solves the 1-D outgoing fixed point of
    c -> c + sum_i w_i(c) e(b_t, i), where e(b, i) is the weighted average
    error a - c of bin (b, i).
    """

    name = "continuous_calibeat"

    def __init__(self, space: Space, nodes=None, tol: float = 1e-12):
        if space.dim != 1 or space.kind != "cube":
            raise ValueError("continuous calibeating is implemented on [0, 1] only")
        super().__init__(space)
        nodes = np.linspace(0.0, 1.0, 11) if nodes is None else np.asarray(nodes, dtype=float)
        self.hats = HatFunctions(nodes)
        self.binning = FractionalBinning(self.hats, dim=1)
        self.tol = tol
        self.previous = float(space.centroid[0])
        self.solver_slack = 0.0
        self._b = None

    def correction(self, b, c: float) -> float:
        e = np.array([self.binning.average(b, i)[0] for i in range(len(self.hats))])
        return float(np.interp(c, self.hats.nodes, e))

    def _decide(self, side):
        b = _one_side(side)
        self._b = b
        e = np.array([self.binning.average(b, i)[0] for i in range(len(self.hats))])
        nodes = self.hats.nodes
        if not np.any(e):
            c = self.previous
            slack = 0.0
        else:
            res = outgoing_fixed_point_1d(
                lambda y: float(np.interp(y, nodes, e)), 0.0, 1.0, self.tol, breakpoints=nodes
            )
            c = res.point
            slack = max(res.residual, 0.0)
        self.solver_slack += slack
        self.previous = c
        return ForecastDecision(np.array([c]), (c,))

    def _learn(self, decision, a):
        c = float(decision.forecast[0])
        self.binning.observe_weighted(self._b, c, np.array([a[0] - c]))


class MultiBlackwell(Forecaster):
    """Approachability-based multi-calibeating: mixes the N experts' bin
    averages with weights proportional to the positive parts of the average
    regret vector."""

    name = "multi_blackwell"

    def __init__(self, space: Space, n_experts: int):
        super().__init__(space)
        self.n = n_experts
        self.tables = [BinTable(space.dim, prior=space.centroid) for _ in range(n_experts)]
        self.xbar = np.zeros(n_experts)
        self.dist2_trace: list[float] = []
        self._sides = None
        self._experts = None

    @property
    def dist2(self) -> float:
        pos = np.maximum(self.xbar, 0.0)
        return float(pos @ pos)

    def _decide(self, side):
        sides = _many_sides(side, self.n)
        self._sides = sides
        experts = np.array([tab.average(b) for tab, b in zip(self.tables, sides)])
        self._experts = experts
        w = np.maximum(self.xbar, 0.0)
        if w.sum() > 0:
            c = (w @ experts) / w.sum()
        else:
            c = experts.mean(axis=0)
        return ForecastDecision(c, forecast_key(c))

    def _learn(self, decision, a):
        c = decision.forecast
        own = float((a - c) @ (a - c))
        x = own - np.sum((a - self._experts) ** 2, axis=1)
        self.xbar += (x - self.xbar) / (self.t + 1)
        self.dist2_trace.append(self.dist2)
        for tab, b in zip(self.tables, self._sides):
            tab.observe(b, a)


class MultiForwardRegression(Forecaster):
    """Per-coordinate forward (Vovk-Azoury-Warmuth) ridge regression on the
    experts' bin averages, with coordinates centered at c0, then projected
    onto C."""

    name = "multi_forward_regression"

    def __init__(self, space: Space, n_experts: int, alpha: float = 1.0, check_every: int = 512):
        if alpha <= 0:
            raise ValueError("ridge parameter must be positive")
        super().__init__(space)
        self.n = n_experts
        self.alpha = float(alpha)
        self.radius, self.center = min_bounding_radius(space)
        m = space.dim
        self.tables = [BinTable(m, prior=space.centroid) for _ in range(n_experts)]
        self.gram = np.array([alpha * np.eye(n_experts) for _ in range(m)])
        self.inv = np.array([np.eye(n_experts) / alpha for _ in range(m)])
        self.rhs = np.zeros((m, n_experts))
        self.check_every = check_every
        self.recomputes = 0
        self.theta_trace: list[np.ndarray] = []
        self._sides = None
        self._x = None

    def _decide(self, side):
        sides = _many_sides(side, self.n)
        self._sides = sides
        experts = np.array([tab.average(b) for tab, b in zip(self.tables, sides)])
        X = (experts - self.center).T  # (m, N): regressors per coordinate
        self._x = X
        chat = np.empty(self.space.dim)
        thetas = np.empty_like(X)
        for i in range(self.space.dim):
            x = X[i]
            P = self.inv[i]
            Px = P @ x
            self.inv[i] = P - np.outer(Px, Px) / (1.0 + x @ Px)
            self.gram[i] += np.outer(x, x)
            thetas[i] = self.inv[i] @ self.rhs[i]
            chat[i] = thetas[i] @ x + self.center[i]
        if (self.t + 1) % self.check_every == 0:
            self._check_drift()
            for i in range(self.space.dim):
                thetas[i] = self.inv[i] @ self.rhs[i]
                chat[i] = thetas[i] @ X[i] + self.center[i]
        self.theta_trace.append(thetas)
        c = project(self.space, chat)
        return ForecastDecision(c, forecast_key(c))

    def _check_drift(self):
        for i in range(self.space.dim):
            err = np.max(np.abs(self.inv[i] @ self.gram[i] - np.eye(self.n)))
            if not np.isfinite(err) or err > 1e-8:
                self.inv[i] = np.linalg.inv(self.gram[i])
                self.recomputes += 1

    def _learn(self, decision, a):
        y = a - self.center
        for i in range(self.space.dim):
            self.rhs[i] += y[i] * self._x[i]
        for tab, b in zip(self.tables, self._sides):
            tab.observe(b, a)


class LogSimpleCalibeat(Forecaster):
    """Forecast the regularized average (sum + g0) / (n + 1) of the side
    forecast's bin, g0 uniform; forecasts stay strictly inside the simplex."""

    name = "log_simple_calibeat"

    def __init__(self, space: Space):
        if space.kind != "simplex":
            raise ValueError("log calibeating needs a simplex space")
        super().__init__(space)
        g0 = np.full(space.dim, 1.0 / space.dim)
        self.table = BinTable(space.dim, prior=g0, regularizer=g0)
        self._b = None

    def _decide(self, side):
        b = _one_side(side)
        self._b = b
        c = self.table.average(b)
        return ForecastDecision(c, forecast_key(c))

    def _learn(self, decision, a):
        self.table.observe(self._b, a)


class LogCalibrated(Forecaster):
    """Randomized forecaster over a log-grid, sampling each period from the
    log-outgoing distribution of g(d) = regularized average of d's bin."""

    stochastic = True
    name = "log_calibrated"

    def __init__(self, space: Space, grid: LogGrid, seed: int = 0):
        if space.kind != "simplex":
            raise ValueError("log calibration needs a simplex space")
        super().__init__(space)
        self.grid = grid
        self.rng = np.random.default_rng(seed)
        g0 = np.full(space.dim, 1.0 / space.dim)
        self.table = BinTable(space.dim, prior=g0, regularizer=g0)
        self._key = None

    def _decide(self, side):
        grid = self.grid
        keys = [grid.key(i) for i in range(len(grid))]
        G = np.array([self.table.average(k) for k in keys])
        eta = outgoing_mm_log(G, grid)
        u = float(self.rng.random())
        i = eta.sample(u)
        self._key = keys[i]
        return ForecastDecision(grid.points[i].copy(), keys[i], eta, u)

    def _learn(self, decision, a):
        self.table.observe(self._key, a)


def simple_calibeat(space: Space, **kw) -> SimpleCalibeat:
    return SimpleCalibeat(space, **kw)


def centered_calibeat(space: Space) -> CenteredCalibeat:
    return CenteredCalibeat(space)


def calibrated_forecaster(space: Space, grid: Grid, seed: int = 0, **kw) -> CalibratedForecaster:
    return CalibratedForecaster(space, grid, seed, **kw)


def calibrated_calibeat(space: Space, grid: Grid, seed: int = 0, **kw) -> CalibratedCalibeat:
    return CalibratedCalibeat(space, grid, seed, **kw)


def continuous_calibeat_1d(space: Space, nodes=None, tol: float = 1e-12) -> ContinuousCalibeat1D:
    return ContinuousCalibeat1D(space, nodes, tol)


def multi_simple(space: Space, n_experts: int | None = None) -> MultiSimple:
    return MultiSimple(space, n_experts)


def multi_blackwell(space: Space, n_experts: int) -> MultiBlackwell:
    return MultiBlackwell(space, n_experts)


def multi_forward_regression(space: Space, n_experts: int, alpha: float = 1.0) -> MultiForwardRegression:
    return MultiForwardRegression(space, n_experts, alpha)


def log_simple_calibeat(space: Space) -> LogSimpleCalibeat:
    return LogSimpleCalibeat(space)


def log_calibrated(space: Space, grid: LogGrid, seed: int = 0) -> LogCalibrated:
    return LogCalibrated(space, grid, seed)
