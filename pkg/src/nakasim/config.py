"""Experiment configuration files (INI style: ``key = value`` under ``[sections]``)."""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .arrivals import BlockTypeSpec, validate_specs
from .errors import ConfigError, InvalidParameterError

EXPERIMENTS = (
    "lambda-h", "nakamoto-prob", "persistence", "private-attack", "counterexample",
    "decay-no-nakamoto", "decay-overtake", "phase-diagram", "stay-above",
)

_EXPERIMENT_KEYS = {
    "name": str, "delta": float, "horizon": float, "n_trials": int, "root_seed": int,
    "n_miners": int, "confidence": float,
}
_REQUIRED = ("name", "delta", "horizon", "n_trials", "root_seed")
_TYPE_KEYS = {"score": float, "honest_rate": float, "adversary_rate": float}

_FLOAT_LIST = "floats"
_STR_LIST = "strings"
# Parameters accepted per experiment, with their parsers. ``lambda_h`` overrides the pilot estimate.
_PARAMS = {
    "lambda-h": {},
    "nakamoto-prob": {"q": float, "tau_q": float, "lambda_h": float},
    "persistence": {"q": float, "tau_q": float, "strategies": _STR_LIST, "restart_deficit": float},
    "private-attack": {"restart_deficit": float, "lambda_h": float},
    "counterexample": {"n_steps": int, "method": str},
    "decay-no-nakamoto": {"q": float, "lengths": _FLOAT_LIST, "start": float, "n_bootstrap": int,
                          "lambda_h": float},
    "decay-overtake": {"window": float, "tprimes": _FLOAT_LIST, "start": float, "n_bootstrap": int,
                       "lambda_h": float},
    "phase-diagram": {"ratios": _FLOAT_LIST, "strategy": str, "restart_deficit": float, "lambda_h": float},
    "stay-above": {"B": float, "epsilon": float, "side": str, "lambda_h": float},
}
_REQUIRED_PARAMS = {
    "decay-no-nakamoto": ("lengths",),
    "decay-overtake": ("window", "tprimes"),
    "phase-diagram": ("ratios",),
    "counterexample": ("n_steps",),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    block_types: tuple[BlockTypeSpec, ...]
    delta: float
    horizon: float
    n_trials: int
    root_seed: int
    n_miners: int = 10
    confidence: float = 0.95
    params: dict[str, Any] = field(default_factory=dict)

    def param(self, key: str, default=None):
        return self.params.get(key, default)

    def canonical(self) -> dict:
        return {
            "experiment": self.experiment,
            "block_types": [[s.type_id, s.score, s.honest_rate, s.adversary_rate] for s in self.block_types],
            "delta": self.delta, "horizon": self.horizon, "n_trials": self.n_trials,
            "root_seed": self.root_seed, "n_miners": self.n_miners, "confidence": self.confidence,
            "params": {k: self.params[k] for k in sorted(self.params)},
        }

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


class _Locator:
    """Line/column lookup for ``key = value`` entries, for error messages."""

    _section = re.compile(r"^\s*\[([^\]]+)\]")
    _key = re.compile(r"^(\s*)([^=:#;\s][^=:]*?)\s*[=:]")

    def __init__(self, text: str, path: str):
        self.path = path
        self.where: dict[tuple[str, str], tuple[int, int]] = {}
        self.sections: dict[str, int] = {}
        current = None
        for n, line in enumerate(text.splitlines(), 1):
            m = self._section.match(line)
            if m:
                current = m.group(1).strip()
                self.sections.setdefault(current, n)
                continue
            m = self._key.match(line)
            if m and current is not None:
                self.where.setdefault((current, m.group(2).strip().lower()), (n, len(m.group(1)) + 1))

    def at(self, section: str, key: str | None = None) -> str:
        if key is not None and (section, key.lower()) in self.where:
            line, col = self.where[(section, key.lower())]
            return f"{self.path}:{line}:{col}"
        if section in self.sections:
            return f"{self.path}:{self.sections[section]}:1"
        return self.path


def _to_int(raw: str) -> int:
    # accepts 10000, 1e4 and 0x2a; rejects 2.5
    s = raw.strip()
    try:
        return int(s, 0)
    except ValueError:
        v = float(s)
        if not v.is_integer():
            raise ValueError("not an integer") from None
        return int(v)


def _convert(kind, raw: str, where: str, name: str):
    try:
        if kind is _FLOAT_LIST:
            vals = [float(x) for x in raw.split(",") if x.strip()]
            if not vals:
                raise ValueError("empty list")
            return vals
        if kind is _STR_LIST:
            vals = [x.strip() for x in raw.split(",") if x.strip()]
            if not vals:
                raise ValueError("empty list")
            return vals
        if kind is int:
            return _to_int(raw)
        if kind is float:
            v = float(raw)
            if math.isnan(v):
                raise ValueError("NaN is not allowed")
            return v
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"{where}: field '{name}': cannot parse {raw!r} ({exc})") from None


def parse_config(text: str, path: str = "<config>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str  # keep key case so 'B' stays distinct
    try:
        cp.read_string(text, source=path)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:1: expected a [section] header before {exc.line.strip()!r}") from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"{path}:{lineno}:1: cannot parse line {line.strip()!r}") from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(f"{path}:{exc.lineno}:1: {exc.message.split(':', 1)[-1].strip()}") from None
    loc = _Locator(text, path)

    known = {"experiment", "params"}
    for sec in cp.sections():
        if sec not in known and not re.fullmatch(r"block_type\.\d+", sec):
            raise ConfigError(f"{loc.at(sec)}: unknown section [{sec}]")
    if not cp.has_section("experiment"):
        raise ConfigError(f"{path}: missing [experiment] section")

    exp = {}
    for key, raw in cp.items("experiment"):
        if key not in _EXPERIMENT_KEYS:
            raise ConfigError(f"{loc.at('experiment', key)}: unknown key '{key}' in [experiment]")
        exp[key] = _convert(_EXPERIMENT_KEYS[key], raw, loc.at("experiment", key), key)
    for key in _REQUIRED:
        if key not in exp:
            raise ConfigError(f"{loc.at('experiment')}: field '{key}' is required in [experiment]")
    name = exp["name"]
    if name not in EXPERIMENTS:
        raise ConfigError(f"{loc.at('experiment', 'name')}: field 'name': unknown experiment {name!r}; "
                          f"expected one of {', '.join(EXPERIMENTS)}")

    def check(cond: bool, key: str, msg: str, section: str = "experiment"):
        if not cond:
            raise ConfigError(f"{loc.at(section, key)}: field '{key}': {msg}")

    check(exp["delta"] >= 0 and math.isfinite(exp["delta"]), "delta", "must be a finite number >= 0")
    check(exp["horizon"] > 0 and math.isfinite(exp["horizon"]), "horizon", "must be a finite number > 0")
    check(exp["n_trials"] >= 1, "n_trials", "must be >= 1")
    check(0 <= exp["root_seed"] < 2**64, "root_seed", "must be in [0, 2**64)")
    n_miners = exp.get("n_miners", 10)
    check(n_miners >= 1, "n_miners", "must be >= 1")
    confidence = exp.get("confidence", 0.95)
    check(0 < confidence < 1, "confidence", "must be in (0, 1)")

    specs = []
    for sec in sorted((s for s in cp.sections() if s.startswith("block_type.")), key=lambda s: int(s.split(".")[1])):
        vals = {}
        for key, raw in cp.items(sec):
            if key not in _TYPE_KEYS:
                raise ConfigError(f"{loc.at(sec, key)}: unknown key '{key}' in [{sec}]")
            vals[key] = _convert(_TYPE_KEYS[key], raw, loc.at(sec, key), key)
        if "score" not in vals:
            raise ConfigError(f"{loc.at(sec)}: field 'score' is required in [{sec}]")
        try:
            specs.append(BlockTypeSpec(int(sec.split(".")[1]), **vals))
        except InvalidParameterError as exc:
            raise ConfigError(f"{loc.at(sec)}: {exc}") from None
    try:
        validate_specs(specs)
    except InvalidParameterError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    allowed = _PARAMS[name]
    params: dict[str, Any] = {}
    if cp.has_section("params"):
        for key, raw in cp.items("params"):
            if key not in allowed:
                raise ConfigError(f"{loc.at('params', key)}: unknown key '{key}' in [params] for experiment "
                                  f"{name!r} (allowed: {', '.join(sorted(allowed)) or 'none'})")
            params[key] = _convert(allowed[key], raw, loc.at("params", key), key)
    for key in _REQUIRED_PARAMS.get(name, ()):
        if key not in params:
            raise ConfigError(f"{loc.at('params')}: field '{key}' is required for experiment {name!r}")
    if "q" in allowed:
        params.setdefault("q", exp["delta"])
        check(params["q"] > 0, "q", "must be > 0", "params")
    for key in ("lengths", "tprimes", "ratios"):
        if key in params:
            vals = params[key]
            check(all(b > a for a, b in zip(vals, vals[1:])) or key == "ratios", key,
                  "must be strictly increasing", "params")
            check(all(v >= 0 for v in vals) and (key != "ratios" or all(v > 0 for v in vals)), key,
                  "values must be positive", "params")
    if "strategies" in params:
        bad = [s for s in params["strategies"] if s not in ("none", "full-delay", "private-mining")]
        check(not bad, "strategies", f"unknown strategies {bad}", "params")
    if "strategy" in params:
        check(params["strategy"] in ("none", "full-delay", "private-mining"), "strategy",
              "must be none, full-delay or private-mining", "params")
    if "side" in params:
        check(params["side"] in ("honest", "adversary"), "side", "must be honest or adversary", "params")
    if "method" in params:
        check(params["method"] in ("renewal", "explicit"), "method", "must be renewal or explicit", "params")
    if name == "counterexample":
        check(len(specs) == 1, "name", "the counterexample experiment needs exactly one block type")
    return ExperimentConfig(name, tuple(specs), float(exp["delta"]), float(exp["horizon"]), int(exp["n_trials"]),
                            int(exp["root_seed"]), int(n_miners), float(confidence), params)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse_config(text, str(path))
