"""Experiment configuration: JSON schema, validation, presets and the
construction of spaces, procedures, sources and side forecasts from specs.

Environment overrides: ``CALIBEAT_OUT`` replaces the output directory and
``CALIBEAT_WORKERS`` sets the worker-pool size.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path

import jsonschema
import numpy as np

from .. import adversaries as adv
from .. import procedures as proc
from ..geometry import Space, make_grid, make_log_grid

PROCEDURES = (
    "simple_calibeat",
    "centered_calibeat",
    "calibrated",
    "calibrated_calibeat",
    "continuous_calibeat",
    "multi_simple",
    "multi_blackwell",
    "multi_forward_regression",
    "log_simple_calibeat",
    "log_calibrated",
    "fixed_forecasts",
)
SOURCES = ("pattern", "iid", "beta_binomial", "adaptive")
SIDES = ("constant", "cyclic", "random", "expert")
LOG_PROCEDURES = ("log_simple_calibeat", "log_calibrated")

_named = {
    "type": "object",
    "properties": {"name": {"type": "string"}, "params": {"type": "object"}},
    "required": ["name"],
    "additionalProperties": False,
}


def _named_spec(names):
    spec = copy.deepcopy(_named)
    spec["properties"]["name"] = {"enum": list(names)}
    return spec


CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "calibeat experiment",
    "type": "object",
    "properties": {
        "space": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["cube", "simplex"]},
                "dim": {"type": "integer", "minimum": 1},
            },
            "required": ["kind", "dim"],
            "additionalProperties": False,
        },
        "procedure": _named_spec(PROCEDURES),
        "procedures": {"type": "array", "items": _named_spec(PROCEDURES), "minItems": 1},
        "source": _named_spec(SOURCES),
        "sides": {"type": "array", "items": _named_spec(SIDES)},
        "horizon": {"type": "integer", "minimum": 1},
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "resolution": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
        "bounds": {"type": "boolean"},
    },
    "required": ["space", "source", "horizon"],
    "oneOf": [{"required": ["procedure"]}, {"required": ["procedures"]}],
    "additionalProperties": False,
}

DEFAULTS = {"sides": [], "seeds": [0], "resolution": 10, "out": "calibeat-out", "bounds": True}

PRESETS = {
    "figure1": {
        "space": {"kind": "cube", "dim": 1},
        "procedures": [
            {"name": "fixed_forecasts", "params": {"pattern": [1.0, 0.0], "label": "F1"}},
            {"name": "fixed_forecasts", "params": {"pattern": [0.5], "label": "F2"}},
            {"name": "fixed_forecasts", "params": {"pattern": [0.75, 0.25], "label": "F3"}},
        ],
        "source": {"name": "pattern", "params": {"pattern": [1.0, 0.0]}},
        "horizon": 100,
    },
    "thm1-bound": {
        "space": {"kind": "cube", "dim": 1},
        "procedure": {"name": "simple_calibeat"},
        "source": {"name": "adaptive"},
        "sides": [{"name": "cyclic", "params": {"period": 2}}],
        "horizon": 10000,
    },
    "lowerbound": {
        "space": {"kind": "cube", "dim": 1},
        "procedure": {"name": "simple_calibeat"},
        "source": {"name": "beta_binomial", "params": {"alpha": 50.0}},
        "sides": [{"name": "constant"}],
        "horizon": 1000,
        "seeds": [0],
    },
}


class ConfigError(ValueError):
    pass


def validate(cfg: dict) -> dict:
    """Validate against the schema and fill defaults.  Returns a new dict."""
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    out = copy.deepcopy(DEFAULTS)
    out.update(copy.deepcopy(cfg))
    kind, dim = out["space"]["kind"], out["space"]["dim"]
    if kind == "simplex" and dim < 2:
        raise ConfigError("a simplex space needs dim >= 2")
    for spec in procedure_specs(out):
        if spec["name"] in LOG_PROCEDURES and kind != "simplex":
            raise ConfigError(f"{spec['name']} needs a simplex space")
    return out


def load(path_or_preset: str) -> dict:
    if path_or_preset in PRESETS:
        return validate(PRESETS[path_or_preset])
    with open(path_or_preset, encoding="utf-8") as fh:
        return validate(json.load(fh))


def apply_env(cfg: dict, env=os.environ) -> dict:
    cfg = dict(cfg)
    if env.get("CALIBEAT_OUT"):
        cfg["out"] = env["CALIBEAT_OUT"]
    return cfg


def worker_count(env=os.environ) -> int:
    raw = env.get("CALIBEAT_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"CALIBEAT_WORKERS must be an integer, got {raw!r}") from None
    return max(n, 1)


def config_hash(cfg: dict) -> str:
    """Hash of everything that determines the results (not the output dir)."""
    cfg = {k: v for k, v in cfg.items() if k != "out"}
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def procedure_specs(cfg: dict) -> list[dict]:
    return list(cfg["procedures"]) if "procedures" in cfg else [cfg["procedure"]]


def flavor_of(spec: dict) -> str:
    return "log" if spec["name"] in LOG_PROCEDURES else "quadratic"


def stream_seeds(seed: int) -> tuple[int, int, int]:
    """Independent seeds for (forecaster, action source, side forecasts)."""
    s = np.random.SeedSequence(seed).generate_state(3, np.uint64)
    return int(s[0]), int(s[1]), int(s[2])


def build_space(cfg: dict) -> Space:
    sp = cfg["space"]
    return Space.cube(sp["dim"]) if sp["kind"] == "cube" else Space.simplex(sp["dim"])


class FixedForecasts(proc.Forecaster):
    """Cycles a fixed forecast pattern regardless of the data (used to score
    reference forecast streams such as the two calibrated forecasts of the
    alternating-rain example)."""

    name = "fixed_forecasts"

    def __init__(self, space: Space, pattern):
        super().__init__(space)
        self.pattern = [space.project(np.atleast_1d(np.asarray(p, dtype=float))) for p in pattern]

    def _decide(self, side):
        c = self.pattern[self.t % len(self.pattern)].copy()
        return proc.ForecastDecision(c, tuple(float(v) for v in c))

    def _learn(self, decision, a):
        pass


def build_procedure(spec: dict, cfg: dict, seed: int) -> proc.Forecaster:
    space = build_space(cfg)
    name = spec["name"]
    p = dict(spec.get("params", {}))
    p.pop("label", None)
    n_sides = len(cfg["sides"])
    res = p.pop("resolution", cfg["resolution"])
    if name == "simple_calibeat":
        return proc.simple_calibeat(space)
    if name == "centered_calibeat":
        return proc.centered_calibeat(space)
    if name == "calibrated":
        return proc.calibrated_forecaster(space, make_grid(space, res), seed=seed)
    if name == "calibrated_calibeat":
        return proc.calibrated_calibeat(space, make_grid(space, res), seed=seed)
    if name == "continuous_calibeat":
        nodes = p.get("nodes")
        return proc.continuous_calibeat_1d(space, nodes=nodes)
    if name == "multi_simple":
        return proc.multi_simple(space, n_sides)
    if name == "multi_blackwell":
        return proc.multi_blackwell(space, n_sides)
    if name == "multi_forward_regression":
        return proc.multi_forward_regression(space, n_sides, alpha=float(p.get("alpha", 1.0)))
    if name == "log_simple_calibeat":
        return proc.log_simple_calibeat(space)
    if name == "log_calibrated":
        return proc.log_calibrated(space, make_log_grid(space.dim, res, p.get("floor")), seed=seed)
    if name == "fixed_forecasts":
        return FixedForecasts(space, p["pattern"])
    raise ConfigError(f"unknown procedure {name!r}")


def build_source(cfg: dict, seed: int) -> adv.ActionSource:
    space = build_space(cfg)
    spec = cfg["source"]
    p = spec.get("params", {})
    name = spec["name"]
    if name == "pattern":
        return adv.pattern_source(p["pattern"], space)
    if name == "iid":
        return adv.iid_source(p["p"], space, seed)
    if name == "beta_binomial":
        if space.kind != "cube" or space.dim != 1:
            raise ConfigError("the beta-binomial source lives on [0, 1]")
        return adv.beta_binomial_source(float(p["alpha"]), seed)
    if name == "adaptive":
        return adv.adaptive_worst_case(space, p.get("mode", "announced"))
    raise ConfigError(f"unknown source {name!r}")


def build_sides(cfg: dict, seed: int) -> list[adv.SideSource]:
    out = []
    for n, spec in enumerate(cfg["sides"]):
        p = spec.get("params", {})
        name = spec["name"]
        if name == "constant":
            out.append(adv.ConstantSide(p.get("label", "b")))
        elif name == "cyclic":
            out.append(adv.CyclicSide(int(p["period"])))
        elif name == "random":
            out.append(adv.RandomSide(int(p["labels"]), seed + n))
        elif name == "expert":
            out.append(adv.ActionExpert(p.get("kind", "perfect"), float(p.get("flip", 0.2)), seed + n))
        else:
            raise ConfigError(f"unknown side forecast {name!r}")
    return out


def schema_json() -> str:
    return json.dumps(CONFIG_SCHEMA, indent=2)


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
