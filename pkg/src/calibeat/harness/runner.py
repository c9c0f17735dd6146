"""Drive one forecaster against one action source and record per-period
score series."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..adversaries import ActionSource, SideSource
from ..binning import HatFunctions, joint_key
from ..procedures import Forecaster
from ..scores import FractionalLedger, KeyedRefinement, LogScoreLedger, ScoreLedger

QUADRATIC_SERIES = ("sq_err", "B", "K_l2", "K_l1", "R", "R_online")
LOG_SERIES = ("kl", "L", "K_log", "R_log", "R_log_online")


@dataclass
class Simulation:
    horizon: int
    flavor: str
    actions: np.ndarray
    forecasts: np.ndarray
    sides: list
    ledger: ScoreLedger | LogScoreLedger
    side_refinements: list
    joint_refinement: KeyedRefinement | None
    series: dict = field(default_factory=dict)
    decisions: list = field(default_factory=list)
    fractional: FractionalLedger | None = None
    fractional_plain: FractionalLedger | None = None

    def side_series(self, n: int) -> np.ndarray:
        return self.series[f"R_side_{n}"]


def simulate(
    forecaster: Forecaster,
    source: ActionSource,
    sides: list[SideSource] | None,
    horizon: int,
    flavor: str = "quadratic",
    hats: HatFunctions | None = None,
    keep_decisions: bool = False,
) -> Simulation:
    """Run ``horizon`` periods.  ``flavor`` selects quadratic or log scores.

    ``N_side_{n}`` series hold the number of distinct side-forecast bins used
    so far, which replaces |B| in the bounds for open-ended alphabets.

    With ``hats``, the errors are also scored under the fractional binning by
    (side forecast, hat index) and by hat index alone.
    """
    if flavor not in ("quadratic", "log"):
        raise ValueError("flavor must be 'quadratic' or 'log'")
    sides = list(sides or [])
    m = forecaster.space.dim
    if any(s.needs_action for s in sides) and source.adaptive:
        raise ValueError("experts that see a_t need an oblivious action source")
    prior = forecaster.space.centroid
    ledger = ScoreLedger(m, prior=prior) if flavor == "quadratic" else LogScoreLedger(m)
    side_refs = [KeyedRefinement(m, flavor, prior=prior) for _ in sides]
    joint_ref = KeyedRefinement(m, flavor, prior=prior) if len(sides) > 1 else None
    frac = FractionalLedger(hats) if hats is not None else None
    frac_plain = FractionalLedger(hats) if hats is not None else None

    names = QUADRATIC_SERIES if flavor == "quadratic" else LOG_SERIES
    series = {k: np.empty(horizon) for k in names}
    for n in range(len(sides)):
        series[f"R_side_{n}"] = np.empty(horizon)
        series[f"N_side_{n}"] = np.empty(horizon)
    if joint_ref is not None:
        series["R_joint"] = np.empty(horizon)
        series["N_joint"] = np.empty(horizon)
    track_dist2 = hasattr(forecaster, "dist2")
    if track_dist2:
        series["dist2"] = np.empty(horizon)
    if frac is not None:
        series["B_frac"] = np.empty(horizon)

    actions = np.empty((horizon, m))
    forecasts = np.empty((horizon, m))
    side_log = []
    decisions = []
    for t in range(1, horizon + 1):
        a_pre = None if source.adaptive else source.next_action()
        bs = [s.next_side(t, a_pre) for s in sides]
        dec = forecaster.next(bs if bs else None)
        a = a_pre if a_pre is not None else source.next_action(dec)
        a = np.asarray(a, dtype=float).reshape(m)
        forecaster.update(a)
        step = ledger.record(a, dec.forecast, dec.key)
        for ref, b in zip(side_refs, bs):
            ref.record(a, b)
        if joint_ref is not None:
            joint_ref.record(a, joint_key(bs))
        i = t - 1
        actions[i] = a
        forecasts[i] = dec.forecast
        side_log.append(bs)
        if keep_decisions:
            decisions.append(dec)
        if flavor == "quadratic":
            series["sq_err"][i] = step.sq_err
            series["B"][i] = ledger.running_brier()
            series["K_l2"][i] = ledger.running_calibration_l2()
            series["K_l1"][i] = ledger.running_calibration_l1()
            series["R"][i] = ledger.running_refinement()
            series["R_online"][i] = ledger.running_online_refinement()
        else:
            series["kl"][i] = step.sq_err
            series["L"][i] = ledger.running_L()
            series["K_log"][i] = ledger.running_K()
            series["R_log"][i] = ledger.running_R()
            series["R_log_online"][i] = ledger.running_online_R()
        for n, ref in enumerate(side_refs):
            series[f"R_side_{n}"][i] = ref.running()
            series[f"N_side_{n}"][i] = ref.n_bins()
        if joint_ref is not None:
            series["R_joint"][i] = joint_ref.running()
            series["N_joint"][i] = joint_ref.n_bins()
        if track_dist2:
            series["dist2"][i] = forecaster.dist2
        if frac is not None:
            b = bs[0] if bs else None
            frac.record(a, dec.forecast, b)
            frac_plain.record(a, dec.forecast, None)
            series["B_frac"][i] = frac.running_brier()
    return Simulation(
        horizon, flavor, actions, forecasts, side_log, ledger, side_refs, joint_ref,
        series, decisions, frac, frac_plain,
    )
