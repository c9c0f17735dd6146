"""Command-line interface.

    calibeat run --config cfg.json [--seed S] [--reps N] [--t T] [--out DIR] [--format csv|json]
    calibeat score data.csv [--binning forecast|side|joint] [--space cube|simplex]
    calibeat compare --config cfg.json
    calibeat figure1 [--t T]
    calibeat lowerbound [--alpha A] [--t T] [--reps N] [--seed S]
    calibeat schema

``--config`` also accepts a preset name (figure1, thm1-bound, lowerbound).
Exit status is 0 on success, 1 when a bound check fails and 2 on bad input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from .harness import config as cfgmod
from .harness import lowerbound as lbmod
from .harness.compare import compare, curves_csv, ranking_csv
from .harness.experiments import aggregate, run_many
from .harness.montecarlo import replication_seeds
from .harness.traces import ScoreFileError, score_file, verify_trace, write_trace

log = logging.getLogger("calibeat")


def _common(p, seed=True, reps=True, t=True):
    p.add_argument("--out", help="output directory (env CALIBEAT_OUT overrides the config)")
    p.add_argument("--format", choices=("csv", "json"), default="json", help="stdout format")
    if seed:
        p.add_argument("--seed", type=int, help="base seed (u64)")
    if reps:
        p.add_argument("--reps", type=int, help="number of replications")
    if t:
        p.add_argument("--t", type=int, help="horizon")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="calibeat", description="calibeating experiments and scoring")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a configured experiment")
    p.add_argument("--config", required=True, help="config path or preset name")
    _common(p)

    p = sub.add_parser("score", help="score a forecast CSV")
    p.add_argument("input")
    p.add_argument("--binning", choices=("forecast", "side", "joint"), default="forecast")
    p.add_argument("--space", choices=("cube", "simplex"), default="cube")
    _common(p, seed=False, reps=False, t=False)

    p = sub.add_parser("compare", help="rank several procedures on one shared stream")
    p.add_argument("--config", required=True)
    _common(p, reps=False)

    p = sub.add_parser("figure1", help="scores of the alternating-rain example")
    _common(p, seed=False, reps=False)

    p = sub.add_parser("lowerbound", help="beta-binomial lower-bound Monte Carlo")
    p.add_argument("--alpha", type=float, default=50.0)
    _common(p)

    sub.add_parser("schema", help="print the config JSON schema")
    return ap


def _resolve(args, cfg: dict) -> dict:
    cfg = cfgmod.apply_env(cfg)
    if args.out:
        cfg["out"] = args.out
    if getattr(args, "t", None):
        cfg["horizon"] = args.t
    seed = getattr(args, "seed", None)
    reps = getattr(args, "reps", None)
    if reps:
        cfg["seeds"] = replication_seeds(seed or 0, reps)
    elif seed is not None:
        cfg["seeds"] = [seed]
    return cfgmod.validate(cfg)


def _emit(obj, fmt: str, rows=None) -> None:
    if fmt == "json":
        print(json.dumps(obj, indent=2, sort_keys=True))
        return
    rows = rows if rows is not None else [obj]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    w.writerows(rows)
    sys.stdout.write(buf.getvalue())


def cmd_run(args) -> int:
    if args.config == "lowerbound":
        # the replication count of this preset needs the vectorized kernel
        args.alpha = cfgmod.PRESETS["lowerbound"]["source"]["params"]["alpha"]
        return cmd_lowerbound(args)
    cfg = _resolve(args, cfgmod.load(args.config))
    out = Path(cfg["out"])
    workers = cfgmod.worker_count()
    status = 0
    summaries = []
    for spec in cfgmod.procedure_specs(cfg):
        reps = run_many(spec, cfg, cfg["seeds"], workers)
        tag = spec.get("params", {}).get("label", spec["name"]) if "procedures" in cfg else spec["name"]
        for r in reps:
            path = out / f"trace_{tag}_seed{r.seed}.csv"
            write_trace(r, path)
            if r.flavor == "quadratic":
                ver = verify_trace(path, prior=cfgmod.build_space(cfg).centroid)
                if not ver.ok:
                    log.error("trace verification failed for %s: %s", path, ver.errors[:3])
                    status = 1
        summary = aggregate(reps, cfg)
        summaries.append(summary)
        cfgmod.write_json(out / f"summary_{tag}.json", summary)
        for b in summary["bounds"]:
            log.info("%s %s: %s", tag, b["name"], "PASS" if b["passed"] else "FAIL")
            if not b["passed"]:
                status = 1
    if args.format == "json":
        _emit(summaries[0] if len(summaries) == 1 else summaries, "json")
    else:
        rows = []
        for s in summaries:
            for r in s["final_scores"]["per_replication"]:
                rows.append({"label": s["label"], **r})
        _emit(None, "csv", rows)
    return status


def cmd_score(args) -> int:
    try:
        res = score_file(Path(args.input), args.binning, args.space)
    except ScoreFileError as exc:
        for p in exc.problems:
            print(f"{args.input}: {p}", file=sys.stderr)
        return 2
    if args.out or cfgmod.apply_env({}).get("out"):
        out = Path(args.out or cfgmod.apply_env({})["out"])
        cfgmod.write_json(out / "score.json", res)
    _emit(res, args.format)
    return 0


def cmd_compare(args) -> int:
    cfg = _resolve(args, cfgmod.load(args.config))
    seed = cfg["seeds"][0]
    reps = compare(cfg, seed)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    ranking = ranking_csv(reps)
    (out / "ranking.csv").write_text(ranking, encoding="utf-8")
    (out / "curves.csv").write_text(curves_csv(reps, cfgmod.build_space(cfg).diameter), encoding="utf-8")
    if args.format == "csv":
        sys.stdout.write(ranking)
    else:
        rows = list(csv.DictReader(io.StringIO(ranking)))
        _emit({"ranking": rows, "seed": seed, "config_hash": cfgmod.config_hash(cfg)}, "json")
    return 0


def cmd_figure1(args) -> int:
    cfg = dict(cfgmod.PRESETS["figure1"])
    cfg = _resolve(args, cfg)
    reps = compare(cfg, 0)
    rows = [
        {"forecast": r.label, "t": r.final["t"], "K": r.final["K_l2"], "R": r.final["R"], "B": r.final["B"]}
        for r in reps
    ]
    if args.format == "json":
        _emit({"rows": rows}, "json")
    else:
        _emit(None, "csv", rows)
    return 0


def cmd_lowerbound(args) -> int:
    res = lbmod.run(
        alpha=args.alpha,
        horizon=args.t or 1000,
        reps=args.reps or 10_000,
        seed=args.seed or 0,
    )
    out = args.out or cfgmod.apply_env({}).get("out")
    if out:
        cfgmod.write_json(Path(out) / "lowerbound.json", res)
    _emit(res, args.format)
    ok = res["gap_pass"] and res["abar_mean_pass"] and res["abar_var_pass"]
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handlers = {
        "run": cmd_run,
        "score": cmd_score,
        "compare": cmd_compare,
        "figure1": cmd_figure1,
        "lowerbound": cmd_lowerbound,
        "schema": lambda a: print(cfgmod.schema_json()) or 0,
    }
    try:
        return handlers[args.command](args)
    except (cfgmod.ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
