"""Several procedures on one shared action / side-forecast stream."""

from __future__ import annotations

import csv
import io

import numpy as np

from ..adversaries import PatternSource, SideSource
from . import config as cfgmod
from .experiments import run_replication
from .traces import forecast_hash


class ReplaySide(SideSource):
    def __init__(self, labels):
        self.labels = labels

    def next_side(self, t, action=None):
        return self.labels[t - 1]


def shared_stream(cfg: dict, seed: int):
    """Draw the actions and side forecasts once; return a factory of fresh
    sources that replay them."""
    if cfg["source"]["name"] == "adaptive":
        raise cfgmod.ConfigError("compare needs an oblivious action source")
    _, a_seed, s_seed = cfgmod.stream_seeds(seed)
    source = cfgmod.build_source(cfg, a_seed)
    sides = cfgmod.build_sides(cfg, s_seed)
    actions, labels = [], [[] for _ in sides]
    for t in range(1, cfg["horizon"] + 1):
        a = source.next_action()
        actions.append(a)
        for lab, s in zip(labels, sides):
            lab.append(s.next_side(t, a))

    def factory():
        return PatternSource(actions), [ReplaySide(lab) for lab in labels]

    return factory


def compare(cfg: dict, seed: int):
    specs = cfgmod.procedure_specs(cfg)
    for spec in specs:
        if cfgmod.flavor_of(spec) != "quadratic":
            raise cfgmod.ConfigError("compare supports quadratic-score procedures only")
    factory = shared_stream(cfg, seed)
    return [run_replication(spec, cfg, seed, shared=factory) for spec in specs]


def ranking_rows(reps) -> list[dict]:
    n_sides = len(reps[0].sides[0]) if reps[0].sides else 0
    rows = []
    for r in reps:
        row = {
            "label": r.label,
            "procedure": r.procedure,
            "B": r.final["B"],
            "R": r.final["R"],
            "K_l2": r.final["K_l2"],
        }
        for n in range(n_sides):
            row[f"gap_{n + 1}"] = r.final["B"] - r.final[f"R_side_{n}"]
        main = [c for c in r.checks if c.name.startswith("B-R")]
        row["bound"] = float(main[0].bound[-1]) if main else float("nan")
        row["within_bound"] = all(c.excess() <= 1e-9 for c in main) if main else ""
        row["forecast_hash"] = forecast_hash(r.forecasts)
        rows.append(row)
    order = sorted(range(len(rows)), key=lambda i: (rows[i]["B"], i))
    ranked = []
    for rank, i in enumerate(order, start=1):
        ranked.append({"rank": rank, **rows[i]})
    return ranked


def _csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def ranking_csv(reps) -> str:
    return _csv(ranking_rows(reps))


def curves_csv(reps, gamma: float, points: int = 40) -> str:
    """Worst gap max_n(B - R_side_n) per procedure at log-spaced t, next to
    the sqrt(N / t) and N ln t / t reference curves."""
    h = len(reps[0].actions)
    n_sides = len(reps[0].sides[0]) if reps[0].sides else 0
    ts = np.unique(np.geomspace(1, h, points).round().astype(int))
    rows = []
    for t in ts:
        row = {"t": int(t)}
        for r in reps:
            if n_sides:
                row[r.label] = float(max(r.series["B"][t - 1] - r.series[f"R_side_{n}"][t - 1] for n in range(n_sides)))
        N = max(n_sides, 1)
        row["sqrt_N_over_t"] = float(gamma ** 2 * np.sqrt(N / t))
        row["N_log_t_over_t"] = float(N * np.log(t) / t)
        rows.append(row)
    return _csv(rows)
