"""CSV traces: writing, independent re-verification, and offline scoring
of external forecast files."""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..geometry import Space
from ..scores import KeyedRefinement, ScoreLedger, forecast_key
from ..binning import joint_key

QUADRATIC_COLUMNS = ("sq_err", "B", "K_l2", "K_l1", "R", "R_online")
LOG_COLUMNS = ("kl", "L", "K_log", "R_log", "R_log_online")


def _num(x) -> str:
    return repr(float(x))


def side_text(b) -> str:
    if isinstance(b, tuple):
        return ";".join(_num(v) if isinstance(v, float) else str(v) for v in b)
    return str(b)


def trace_header(m: int, n_sides: int, flavor: str) -> list[str]:
    cols = ["t"] + [f"a_{i + 1}" for i in range(m)] + [f"b_{n + 1}" for n in range(n_sides)]
    cols += [f"c_{i + 1}" for i in range(m)]
    cols += list(QUADRATIC_COLUMNS if flavor == "quadratic" else LOG_COLUMNS)
    return cols + ["bound"]


def trace_text(rep) -> str:
    """CSV text of one replication.  Floats use the shortest round-trip
    representation so identical runs give identical bytes."""
    m = rep.actions.shape[1]
    n_sides = len(rep.sides[0]) if rep.sides else 0
    cols = QUADRATIC_COLUMNS if rep.flavor == "quadratic" else LOG_COLUMNS
    bound = rep.main_bound
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trace_header(m, n_sides, rep.flavor))
    for i in range(len(rep.actions)):
        row = [str(i + 1)]
        row += [_num(v) for v in rep.actions[i]]
        row += [side_text(b) for b in rep.sides[i]]
        row += [_num(v) for v in rep.forecasts[i]]
        row += [_num(rep.series[c][i]) for c in cols]
        row.append(_num(bound[i]))
        w.writerow(row)
    return buf.getvalue()


def write_trace(rep, path: Path) -> str:
    text = trace_text(rep)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return hashlib.sha256(text.encode()).hexdigest()


def forecast_hash(forecasts: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(forecasts, dtype=float).tobytes()).hexdigest()


@dataclass
class TraceVerification:
    rows: int
    max_error: float
    errors: list

    @property
    def ok(self) -> bool:
        return not self.errors


def verify_trace(path: Path, prior=None, tol: float = 1e-9) -> TraceVerification:
    """Recompute every cumulative column of a quadratic trace from its a and
    c columns with sum / sum-of-squares bookkeeping (independent of the
    Welford updates used to write it) and compare row by row."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    a_idx = [i for i, h in enumerate(header) if h.startswith("a_")]
    c_idx = [i for i, h in enumerate(header) if h.startswith("c_")]
    col = {h: i for i, h in enumerate(header)}
    m = len(a_idx)
    prior = np.full(m, 0.5) if prior is None else np.asarray(prior, dtype=float)
    n: dict = {}
    S: dict = {}
    S2: dict = {}
    contrib_R: dict = {}
    contrib_K: dict = {}
    tot_R = tot_K = sq_sum = online = 0.0
    errors = []
    worst = 0.0
    for r, row in enumerate(rows, start=1):
        a = np.array([float(row[i]) for i in a_idx])
        c = np.array([float(row[i]) for i in c_idx])
        key = tuple(c)
        prev = S[key] / n[key] if key in n else prior
        online += float((a - prev) @ (a - prev))
        n[key] = n.get(key, 0) + 1
        S[key] = S.get(key, np.zeros(m)) + a
        S2[key] = S2.get(key, 0.0) + float(a @ a)
        tot_R -= contrib_R.get(key, 0.0)
        tot_K -= contrib_K.get(key, 0.0)
        mean = S[key] / n[key]
        contrib_R[key] = S2[key] - float(S[key] @ S[key]) / n[key]
        contrib_K[key] = n[key] * float((mean - c) @ (mean - c))
        tot_R += contrib_R[key]
        tot_K += contrib_K[key]
        sq = float((a - c) @ (a - c))
        sq_sum += sq
        expect = {
            "t": float(r), "sq_err": sq, "B": sq_sum / r, "K_l2": tot_K / r,
            "R": tot_R / r, "R_online": online / r,
        }
        for name, v in expect.items():
            got = float(row[col[name]])
            err = abs(got - v)
            worst = max(worst, err)
            if err > tol * max(1.0, abs(v)):
                errors.append(f"row {r}: {name} = {got!r}, recomputed {v!r}")
        b_, k_, r_ = (float(row[col[x]]) for x in ("B", "K_l2", "R"))
        if abs(b_ - k_ - r_) > tol:
            errors.append(f"row {r}: B - K - R = {b_ - k_ - r_:.3e}")
    return TraceVerification(len(rows), worst, errors)


class ScoreFileError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("\n".join(problems))
        self.problems = problems


def read_forecast_csv(path: Path, space_kind: str = "cube"):
    """Parse ``t,a_1..a_m,c_1..c_m[,b_1..b_N]``.  All malformed rows are
    collected and reported together with their line numbers."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ScoreFileError(["line 1: empty file"]) from None
        body = list(reader)
    problems = []
    if not header or header[0] != "t":
        problems.append("line 1: header must start with 't'")
    a_cols = [h for h in header if h.startswith("a_")]
    c_cols = [h for h in header if h.startswith("c_")]
    b_cols = [h for h in header if h.startswith("b_")]
    m = len(a_cols)
    expected = ["t"] + [f"a_{i + 1}" for i in range(m)] + [f"c_{i + 1}" for i in range(m)]
    expected += [f"b_{n + 1}" for n in range(len(b_cols))]
    if m == 0 or header != expected:
        problems.append(f"line 1: expected header {','.join(expected) if m else 't,a_1..a_m,c_1..c_m[,b_1..b_N]'}")
        raise ScoreFileError(problems)
    space = Space.cube(m) if space_kind == "cube" else Space.simplex(m)
    A, C, Bs = [], [], []
    last_t = 0
    for line, row in enumerate(body, start=2):
        if not row or all(not x.strip() for x in row):
            continue
        if len(row) != len(header):
            problems.append(f"line {line}: expected {len(header)} fields, got {len(row)}")
            continue
        try:
            t = int(row[0])
        except ValueError:
            problems.append(f"line {line}: t must be an integer, got {row[0]!r}")
            continue
        if t != last_t + 1:
            problems.append(f"line {line}: t = {t}, expected {last_t + 1}")
        last_t = t
        try:
            vals = [float(x) for x in row[1:1 + 2 * m]]
        except ValueError as exc:
            problems.append(f"line {line}: {exc}")
            continue
        if not all(math.isfinite(v) for v in vals):
            problems.append(f"line {line}: non-finite value")
            continue
        a, c = np.array(vals[:m]), np.array(vals[m:])
        if not space.contains(a):
            problems.append(f"line {line}: action {vals[:m]} outside the {space_kind}")
        if not space.contains(c):
            problems.append(f"line {line}: forecast {vals[m:]} outside the {space_kind}")
        A.append(a)
        C.append(c)
        Bs.append([x.strip() for x in row[1 + 2 * m:]])
    if not A and not problems:
        problems.append("no data rows")
    if problems:
        raise ScoreFileError(problems)
    return np.array(A), np.array(C), Bs, space


def score_arrays(A, C, sides, space: Space, binning: str = "forecast") -> dict:
    """Scores of a forecast stream.  ``forecast`` bins by forecast value,
    ``joint`` by (side forecasts, forecast), ``side`` reports the forecast
    scores together with the refinement of the actions binned by the side
    forecasts and the calibeating gap B - R_side."""
    if binning not in ("forecast", "side", "joint"):
        raise ValueError("binning must be forecast, side or joint")
    if binning != "forecast" and (not sides or not sides[0]):
        raise ValueError(f"{binning} binning needs b_ columns")
    ledger = ScoreLedger(space.dim, prior=space.centroid)
    side_ref = KeyedRefinement(space.dim, prior=space.centroid)
    for a, c, b in zip(A, C, sides):
        key = forecast_key(c)
        if binning == "joint":
            key = joint_key([*b, key])
        ledger.record(a, c, key)
        if binning == "side":
            side_ref.record(a, joint_key(b) if len(b) > 1 else b[0])
    out = ledger.summary()
    out["binning"] = binning
    if binning == "side":
        out["R_side"] = side_ref.final()
        out["gap"] = out["B"] - out["R_side"]
        out["N_side"] = side_ref.n_bins()
    return out


def score_file(path: Path, binning: str = "forecast", space_kind: str = "cube") -> dict:
    A, C, sides, space = read_forecast_csv(path, space_kind)
    out = score_arrays(A, C, sides, space, binning)
    out["file"] = str(path)
    return out
