"""Experiment documents: parsing, validation and default resolution."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

from .gibbs import capital_lambda, default_kappa
from .schedules import BetaSchedule
from .simulate import DEFAULT_H0, DEFAULT_RATIO, DEFAULT_T_INIT, SimConfig, hash_dict

COMMANDS = ("lambda-table", "profile-dump", "simulate", "ensemble", "rate", "shadow", "classify")
FORMATS = ("csv", "json")
TABLE_NS = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 20, 50, 100]


class ConfigError(ValueError):
    pass


_SIM_DEFAULTS = {
    "n": None,
    "schedule": None,
    "T": None,
    "seed": 0,
    "h0": DEFAULT_H0,
    "t_init": DEFAULT_T_INIT,
    "step_mode": "fixed",
    "h_max": 0.08,
    "checkpoint_ratio": DEFAULT_RATIO,
    "start": "uniform",
    "tests": None,
    "kappa": None,
}

DEFAULTS: dict[str, dict[str, Any]] = {
    "lambda-table": {"ns": TABLE_NS},
    "profile-dump": {"ns": [1, 2, 3, 4], "r_max": 10.0, "r_step": 0.01},
    "simulate": dict(_SIM_DEFAULTS),
    "ensemble": dict(_SIM_DEFAULTS, n_seeds=8),
    "rate": {"input": None, "label": "x0", "window": None, "reference": None, "slack": 0.15},
    "shadow": {"input": None, "label": "x0", "horizon": 1.0, "fit_window": None},
    "classify": {"n": None, "b": None, "schedule": None, "kappa": None},
}
_COMMON = {"command", "out", "format"}
_SCHEDULE_KEYS = {"kind", "b", "a", "gamma"}


@dataclass
class ExperimentSpec:
    command: str
    params: dict
    out: Optional[str] = None
    format: str = "csv"
    warnings: list[str] = field(default_factory=list)

    def config_hash(self) -> str:
        return hash_dict({"command": self.command, "params": self.params})

    def echo(self) -> dict:
        return {"command": self.command, "params": self.params, "out": self.out, "format": self.format}

    def sim_config(self) -> SimConfig:
        p = {k: v for k, v in self.params.items() if k in _SIM_DEFAULTS and k != "kappa"}
        if p.get("tests") is None:
            p.pop("tests", None)
        return SimConfig.from_dict(p)


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def _schedule(raw) -> BetaSchedule:
    _require(isinstance(raw, dict), "schedule must be an object with keys kind, b[, a, gamma]")
    unknown = set(raw) - _SCHEDULE_KEYS
    if unknown:
        raise ConfigError(f"unknown schedule key {sorted(unknown)[0]!r}")
    try:
        return BetaSchedule(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid schedule: {exc}") from None


def _window(value, name):
    if value is None:
        return None
    _require(isinstance(value, (list, tuple)) and len(value) == 2, f"{name} must be a pair [lo, hi]")
    lo, hi = float(value[0]), float(value[1])
    _require(0 < lo < hi, f"{name} requires 0 < lo < hi")
    return [lo, hi]


def hypothesis_warnings(schedule: BetaSchedule, n: int) -> list[str]:
    """Warnings for schedules outside the rate theorem's hypotheses."""
    out = []
    c = schedule.constants
    if not schedule.classified:
        out.append("schedule grows linearly and is outside the classified regimes")
        return out
    if c.beta0 > 0:
        Lam, _ = capital_lambda(n)
        if not c.beta0 < 1.0 / Lam:
            out.append(
                f"beta is not bounded below by -beta0 > -1/Lambda (beta0={c.beta0}, 1/Lambda={1.0 / Lam:.6g}): "
                "outside the hypotheses of the convergence-rate theorem; no rate is guaranteed"
            )
    return out


def resolve(command: str, doc: dict) -> ExperimentSpec:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {COMMANDS}")
    defaults = DEFAULTS[command]
    for key in doc:
        if key not in defaults and key not in _COMMON:
            raise ConfigError(f"unknown key {key!r} for command {command!r}")
    params = {k: doc.get(k, v) for k, v in defaults.items()}
    fmt = doc.get("format", "csv")
    _require(fmt in FORMATS, f"format must be one of {FORMATS}")
    spec = ExperimentSpec(command=command, params=params, out=doc.get("out"), format=fmt)

    if command == "lambda-table":
        ns = params["ns"]
        _require(isinstance(ns, list) and ns and all(isinstance(n, int) and n >= 1 for n in ns),
                 "ns must be a nonempty list of integers n >= 1")
    elif command == "profile-dump":
        ns = params["ns"]
        _require(isinstance(ns, list) and ns and all(isinstance(n, int) and n >= 1 for n in ns),
                 "ns must be a nonempty list of integers n >= 1")
        _require(params["r_max"] > 0, "r_max > 0")
        _require(0 < params["r_step"] <= params["r_max"], "0 < r_step <= r_max")
    elif command in ("simulate", "ensemble"):
        for key in ("n", "schedule", "T"):
            _require(params[key] is not None, f"missing required key {key!r}")
        schedule = _schedule(params["schedule"])
        params["schedule"] = schedule.to_dict()
        _require(isinstance(params["seed"], int) and 0 <= params["seed"] < 2**64, "seed must be a u64 integer")
        if params["kappa"] is None:
            params["kappa"] = default_kappa(params["n"])
        if command == "ensemble":
            _require(isinstance(params["n_seeds"], int) and params["n_seeds"] >= 1, "n_seeds >= 1")
        try:
            cfg = spec.sim_config()
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid simulation parameters: {exc}") from None
        params["tests"] = [f.label for f in cfg.tests]
        params["start"] = cfg.to_dict()["start"]
        spec.warnings = hypothesis_warnings(schedule, cfg.n)
    elif command in ("rate", "shadow"):
        _require(params["input"] is not None, "missing required key 'input' (record file or directory)")
        if command == "rate":
            params["window"] = _window(params["window"], "window")
            _require(params["slack"] >= 0, "slack >= 0")
        else:
            params["fit_window"] = _window(params["fit_window"], "fit_window")
            _require(params["horizon"] > 0, "horizon > 0")
    elif command == "classify":
        _require(isinstance(params["n"], int) and params["n"] >= 1, "n must be an integer >= 1")
        if params["schedule"] is None:
            _require(params["b"] is not None, "classify needs either b or a schedule")
            params["schedule"] = {"kind": "constant", "b": float(params["b"])}
        schedule = _schedule(params["schedule"])
        params["schedule"] = schedule.to_dict()
        if schedule.kind == "constant":
            params["b"] = schedule.b
        if params["kappa"] is None:
            params["kappa"] = default_kappa(params["n"])
        spec.warnings = hypothesis_warnings(schedule, params["n"])
    return spec


def parse_config(text: str, command: Optional[str] = None) -> ExperimentSpec:
    """Parse a JSON experiment document into a validated experiment with defaults filled in.

    The command comes from the document's ``command`` key or from the
    ``command`` argument; when both are given they must agree.
    """
    try:
        doc = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config document: {exc}") from None
    _require(isinstance(doc, dict), "config document must be a JSON object")
    cmd = doc.get("command", command)
    if command is not None and cmd != command:
        raise ConfigError(f"config is for command {cmd!r} but {command!r} was requested")
    if cmd is None:
        cmd = "simulate"
    return resolve(cmd, doc)
