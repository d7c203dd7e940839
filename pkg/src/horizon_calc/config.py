"""TOML run configuration.

Sections and keys (all optional except the required market keys)::

    [market]            s0, x0, mu_star, sigma (list), a (list)   required
                        b = 1.0
    [market.exit_law]   kind = "exponential" | "uniform" | "weibull" | "none"
                        rate | low, high | shape, scale
    [simulation]        paths = 10000, steps_per_unit = 4096, seed = 0, csv_paths = 10
    [optimize]          w_min = 0.0, w_max = 4.0, w_step = 0.1
    [verify]            n_steps = 16, n_paths = 200, n_sets = 10

The ``market`` section is required only by the market subcommands.
"""

from __future__ import annotations

import hashlib
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .market import ExitLaw, ExitLawError, MarketConfig

_MARKET_REQUIRED = ("s0", "x0", "mu_star", "sigma", "a", "exit_law")
_MARKET_KEYS = set(_MARKET_REQUIRED) | {"b"}
_EXIT_KEYS = {
    "exponential": {"rate"},
    "uniform": {"low", "high"},
    "weibull": {"shape", "scale"},
    "none": set(),
}
_SIM_DEFAULTS = {"paths": 10_000, "steps_per_unit": 4096, "seed": 0, "csv_paths": 10}
_OPT_DEFAULTS = {"w_min": 0.0, "w_max": 4.0, "w_step": 0.1}
_VERIFY_DEFAULTS = {"n_steps": 16, "n_paths": 200, "n_sets": 10}


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class SimulationSettings:
    paths: int = 10_000
    steps_per_unit: int = 4096
    seed: int = 0
    csv_paths: int = 10


@dataclass(frozen=True)
class OptimizeSettings:
    w_min: float = 0.0
    w_max: float = 4.0
    w_step: float = 0.1


@dataclass(frozen=True)
class VerifySettings:
    n_steps: int = 16
    n_paths: int = 200
    n_sets: int = 10


@dataclass(frozen=True)
class RunConfig:
    market: Optional[MarketConfig] = None
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    optimize: OptimizeSettings = field(default_factory=OptimizeSettings)
    verify: VerifySettings = field(default_factory=VerifySettings)
    digest: str = "none"


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return (isinstance(v, (int, float)) and not isinstance(v, bool)) and math.isfinite(v)


def _section(doc: dict, name: str, allowed: set, problems: list[str]) -> dict:
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        problems.append(f"[{name}] must be a table")
        return {}
    for k in sorted(set(sec) - allowed):
        problems.append(f"unknown key {name}.{k}")
    return sec


def _ints(sec: dict, name: str, defaults: dict, problems: list[str], minimum: int = 1) -> dict:
    out = {}
    for k, d in defaults.items():
        v = sec.get(k, d)
        if isinstance(d, int):
            if not _is_int(v) or v < minimum:
                problems.append(f"{name}.{k} must be an integer >= {minimum}")
                continue
        elif not _is_num(v):
            problems.append(f"{name}.{k} must be a finite number")
            continue
        out[k] = v
    return out


def _exit_law(sec: Any, problems: list[str]) -> Optional[ExitLaw]:
    if not isinstance(sec, dict):
        problems.append("market.exit_law must be a table")
        return None
    kind = sec.get("kind")
    if kind not in _EXIT_KEYS:
        problems.append(f"market.exit_law.kind must be one of {sorted(_EXIT_KEYS)}")
        return None
    allowed = _EXIT_KEYS[kind] | {"kind"}
    ok = True
    for k in sorted(set(sec) - allowed):
        problems.append(f"unknown key market.exit_law.{k}")
        ok = False
    for k in sorted(_EXIT_KEYS[kind]):
        if k not in sec:
            problems.append(f"missing key market.exit_law.{k}")
            ok = False
        elif not _is_num(sec[k]):
            problems.append(f"market.exit_law.{k} must be a finite number")
            ok = False
    if not ok:
        return None
    try:
        return ExitLaw(kind, **{k: float(sec[k]) for k in _EXIT_KEYS[kind]})
    except ExitLawError as exc:
        problems.append(f"market.exit_law: {exc}")
        return None


def _market(sec: dict, sim: dict, problems: list[str]) -> Optional[MarketConfig]:
    n0 = len(problems)
    for k in _MARKET_REQUIRED:
        if k not in sec:
            problems.append(f"missing key market.{k}")
    for k in ("s0", "x0", "mu_star", "b"):
        if k in sec and not _is_num(sec[k]):
            problems.append(f"market.{k} must be a finite number")
    for k in ("s0", "x0"):
        if k in sec and _is_num(sec[k]) and sec[k] <= 0:
            problems.append(f"market.{k} must be positive")
    if "mu_star" in sec and _is_num(sec["mu_star"]) and sec["mu_star"] < 0:
        problems.append("market.mu_star must be nonnegative")
    if "b" in sec and _is_num(sec["b"]) and sec["b"] <= 0:
        problems.append("market.b must be positive")
    for k in ("sigma", "a"):
        if k in sec and (not isinstance(sec[k], list) or not all(_is_num(x) for x in sec[k])):
            problems.append(f"market.{k} must be a list of finite numbers")
    sig, a = sec.get("sigma"), sec.get("a")
    if isinstance(sig, list) and all(_is_num(x) for x in sig) and any(x < 0 for x in sig):
        problems.append("market.sigma entries must be nonnegative")
    if isinstance(a, list) and all(_is_num(x) for x in a):
        if any(x <= 0 for x in a[:1]) or any(y <= x for x, y in zip(a, a[1:])):
            problems.append("market.a must be positive and strictly increasing")
    if isinstance(sig, list) and isinstance(a, list) and len(sig) != len(a):
        problems.append("market.sigma and market.a must have the same length")
    law = _exit_law(sec["exit_law"], problems) if "exit_law" in sec else None
    if len(problems) > n0 or law is None:
        return None
    try:
        return MarketConfig(float(sec["s0"]), float(sec["x0"]), float(sec["mu_star"]), tuple(sig), tuple(a),
                            law, float(sec.get("b", 1.0)), sim.get("paths", 10_000),
                            sim.get("steps_per_unit", 4096), sim.get("seed", 0))
    except ValueError as exc:
        problems.append(f"market: {exc}")
        return None


def parse_config_text(text: str, require_market: bool = False) -> RunConfig:
    problems: list[str] = []
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"not valid TOML: {exc}"]) from exc
    for k in sorted(set(doc) - {"market", "simulation", "optimize", "verify"}):
        problems.append(f"unknown section [{k}]")
    sim_sec = _section(doc, "simulation", set(_SIM_DEFAULTS), problems)
    sizes = {k: v for k, v in _SIM_DEFAULTS.items() if k != "seed"}
    sim = _ints(sim_sec, "simulation", sizes, problems, minimum=1)
    seed = sim_sec.get("seed", 0)
    if _is_int(seed) and 0 <= seed < 2**64:
        sim["seed"] = seed
    else:
        problems.append("simulation.seed must be an integer in [0, 2**64)")
    opt = _ints(_section(doc, "optimize", set(_OPT_DEFAULTS), problems), "optimize", _OPT_DEFAULTS, problems)
    if len(opt) == 3 and not (opt["w_step"] > 0 and opt["w_max"] >= opt["w_min"]):
        problems.append("optimize needs w_step > 0 and w_max >= w_min")
    ver = _ints(_section(doc, "verify", set(_VERIFY_DEFAULTS), problems), "verify", _VERIFY_DEFAULTS, problems)
    market = None
    if "market" in doc:
        msec = _section(doc, "market", _MARKET_KEYS, problems)
        market = _market(msec, sim, problems)
    elif require_market:
        problems.append("missing section [market]")
    if problems:
        raise ConfigError(problems)
    return RunConfig(market, SimulationSettings(**sim), OptimizeSettings(**{k: float(v) for k, v in opt.items()}),
                     VerifySettings(**ver), hashlib.sha256(text.encode()).hexdigest())


def parse_config(path: str | Path, require_market: bool = False) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"cannot read {p}: {exc}"]) from exc
    return parse_config_text(text, require_market)
