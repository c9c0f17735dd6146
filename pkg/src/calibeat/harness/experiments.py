"""One replication of a configured experiment, the bound envelopes that
apply to it, and aggregation across replications."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import bounds
from ..geometry import make_grid, make_log_grid, min_bounding_radius
from ..scores import FractionalLedger
from . import config as cfgmod
from .runner import Simulation, simulate

EVERY_T = "every_t"  # hard envelope at every period of every replication
EXPECTATION = "expectation"  # mean over replications at the horizon, plus 3 standard errors
FINAL = "final"  # hard inequality at the horizon only


@dataclass
class BoundCheck:
    name: str
    kind: str
    formula: str
    bound: np.ndarray
    value: np.ndarray

    def excess(self) -> float:
        return float(np.max(self.value - self.bound))


@dataclass
class Replication:
    seed: int
    procedure: str
    label: str
    flavor: str
    actions: np.ndarray
    forecasts: np.ndarray
    sides: list
    series: dict
    final: dict
    checks: list = field(default_factory=list)

    @property
    def main_bound(self) -> np.ndarray:
        if self.checks:
            return self.checks[0].bound
        return np.full(len(self.actions), np.nan)


def _t(h: int) -> np.ndarray:
    return np.arange(1, h + 1, dtype=float)


def envelope_checks(spec: dict, cfg: dict, sim: Simulation, forecaster) -> list[BoundCheck]:
    """Bound checks for the procedure in ``spec``.  Realized bin counts
    replace |B| so open-ended side alphabets are handled."""
    space = forecaster.space
    gamma = space.diameter
    t = _t(sim.horizon)
    s = sim.series
    name = spec["name"]
    n_sides = len(sim.side_refinements)
    checks = []

    def gaps():
        return [s["B"] - s[f"R_side_{n}"] for n in range(n_sides)]

    if name == "simple_calibeat":
        nb = s["N_side_0"]
        bound = bounds.simple_calibeat(gamma, nb, t) + forecaster.bound_extra
        f = bounds.describe("simple_calibeat", gamma=gamma, n_bins=int(nb[-1]))
        checks.append(BoundCheck("B-R_side_0", EVERY_T, f, bound, gaps()[0]))
    elif name == "centered_calibeat":
        r = forecaster.radius
        nb = s["N_side_0"]
        bound = bounds.centered_calibeat(r, nb, t)
        f = bounds.describe("centered_calibeat", radius=r, n_bins=int(nb[-1]))
        checks.append(BoundCheck("B-R_side_0", EVERY_T, f, bound, gaps()[0]))
    elif name == "multi_simple":
        nb = s["N_joint"] if "N_joint" in s else s["N_side_0"]
        bound = bounds.multi_simple(gamma, nb, t)
        f = bounds.describe("multi_simple", gamma=gamma, bins_product=int(nb[-1]))
        for n, g in enumerate(gaps()):
            checks.append(BoundCheck(f"B-R_side_{n}", EVERY_T, f, bound, g))
    elif name == "multi_blackwell":
        for n, g in enumerate(gaps()):
            nb = s[f"N_side_{n}"]
            bound = bounds.blackwell(gamma, n_sides, nb, t)
            f = bounds.describe("blackwell", gamma=gamma, n_experts=n_sides, n_bins=int(nb[-1]))
            checks.append(BoundCheck(f"B-R_side_{n}", EVERY_T, f, bound, g))
        f = bounds.describe("blackwell_dist2", gamma=gamma, n_experts=n_sides)
        checks.append(BoundCheck("dist2", EVERY_T, f, bounds.blackwell_dist2(gamma, n_sides, t), s["dist2"]))
    elif name == "multi_forward_regression":
        r, _ = min_bounding_radius(space)
        for n, g in enumerate(gaps()):
            nb = s[f"N_side_{n}"]
            bound = bounds.forward_regression(space.dim, r, n_sides, forecaster.alpha, gamma, nb, t)
            f = bounds.describe(
                "forward_regression", m=space.dim, gamma0=r, n_experts=n_sides,
                alpha=forecaster.alpha, gamma=gamma, n_bins=int(nb[-1]),
            )
            checks.append(BoundCheck(f"B-R_side_{n}", EVERY_T, f, bound, g))
    elif name == "calibrated":
        grid = forecaster.grid
        bound = bounds.calibration(grid.delta, gamma, len(grid), t)
        f = bounds.describe("calibration", delta=grid.delta, gamma=gamma, grid_size=len(grid))
        checks.append(BoundCheck("K_l2", EXPECTATION, f, bound, s["K_l2"]))
    elif name == "calibrated_calibeat":
        grid = forecaster.grid
        nb = s["N_side_0"]
        bound = bounds.calibrated_calibeat(grid.delta, gamma, nb, len(grid), t)
        f = bounds.describe(
            "calibrated_calibeat", delta=grid.delta, gamma=gamma, n_bins=int(nb[-1]), grid_size=len(grid)
        )
        checks.append(BoundCheck("B-R_side_0", EXPECTATION, f, bound, gaps()[0]))
        checks.append(BoundCheck("K_l2", EXPECTATION, f, bound, s["K_l2"]))
    elif name == "log_calibrated":
        d = forecaster.grid.delta
        f = f"E[K_log] <= delta + O(ln t / t) [delta={d:g}; checked against delta alone]"
        checks.append(BoundCheck("K_log", EXPECTATION, f, np.full(sim.horizon, d), s["K_log"]))
    elif name == "continuous_calibeat":
        fs = sim.fractional.scores()
        eps = fs.online_R_joint - fs.R_joint + forecaster.solver_slack / sim.horizon
        f = "B <= R_frac + (online R_frac - R_frac) + accumulated solver slack / t"
        value = np.full(sim.horizon, np.nan)
        value[-1] = sim.ledger.brier() - fs.R_joint
        bound = np.full(sim.horizon, np.nan)
        bound[-1] = eps
        checks.append(BoundCheck("B-R_frac", FINAL, f, bound, value))
    return checks


def run_replication(spec: dict, cfg: dict, seed: int, shared=None) -> Replication:
    """Run ``spec`` once.  ``shared`` optionally fixes the action source and
    side forecasts (for comparisons on a common stream)."""
    f_seed, a_seed, s_seed = cfgmod.stream_seeds(seed)
    forecaster = cfgmod.build_procedure(spec, cfg, f_seed)
    if shared is None:
        source = cfgmod.build_source(cfg, a_seed)
        sides = cfgmod.build_sides(cfg, s_seed)
    else:
        source, sides = shared()
    flavor = cfgmod.flavor_of(spec)
    hats = getattr(forecaster, "hats", None)
    sim = simulate(forecaster, source, sides, cfg["horizon"], flavor=flavor, hats=hats)
    if flavor == "quadratic":
        final = sim.ledger.summary()
    else:
        sc = sim.ledger.scores()
        final = {"t": sim.horizon, "L": sc.L, "K_log": sc.K_log, "R_log": sc.R_log, "H": sc.H,
                 "R_log_online": sc.online_R_log, "residual": sc.residual}
    for n, ref in enumerate(sim.side_refinements):
        final[f"R_side_{n}"] = ref.final()
        final[f"N_side_{n}"] = ref.n_bins()
    checks = envelope_checks(spec, cfg, sim, forecaster) if cfg.get("bounds", True) else []
    label = spec.get("params", {}).get("label", spec["name"])
    return Replication(
        seed, spec["name"], label, flavor, sim.actions, sim.forecasts, sim.sides,
        sim.series, final, checks,
    )


def _job(args):
    spec, cfg, seed = args
    return run_replication(spec, cfg, seed)


def run_many(spec: dict, cfg: dict, seeds, workers: int = 1) -> list[Replication]:
    """Replications in seed order regardless of the number of workers."""
    jobs = [(spec, cfg, int(s)) for s in seeds]
    if workers <= 1 or len(jobs) <= 1:
        return [_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_job, jobs))


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def aggregate(reps: list[Replication], cfg: dict) -> dict:
    """Summary with per-replication final scores, mean/stderr and one
    PASS/FAIL per bound check."""
    per = [dict(seed=r.seed, **r.final) for r in reps]
    keys = [k for k in reps[0].final if k != "t"]
    mean, se = {}, {}
    for k in keys:
        mean[k], se[k] = _mean_se([r.final[k] for r in reps])
    checks = []
    for i, c0 in enumerate(reps[0].checks):
        cs = [r.checks[i] for r in reps]
        entry = {"name": c0.name, "kind": c0.kind, "formula": c0.formula}
        if c0.kind == EVERY_T:
            worst = max(c.excess() for c in cs)
            entry.update(max_excess=worst, bound_final=float(c0.bound[-1]), passed=bool(worst <= 1e-9))
        elif c0.kind == EXPECTATION:
            m, s = _mean_se([c.value[-1] for c in cs])
            b = float(c0.bound[-1])
            entry.update(mean=m, stderr=s, bound=b, margin=3 * s, passed=bool(m <= b + 3 * s))
        else:
            worst = max(float(c.value[-1] - c.bound[-1]) for c in cs)
            entry.update(max_excess=worst, passed=bool(worst <= 1e-9))
        checks.append(entry)
    return {
        "procedure": reps[0].procedure,
        "label": reps[0].label,
        "final_scores": {"per_replication": per, "mean": mean, "stderr": se},
        "bounds": checks,
        "seeds": [r.seed for r in reps],
        "config_hash": cfgmod.config_hash(cfg),
    }
