"""Experiment configuration: parsing, validation and the preset catalog."""

from __future__ import annotations

import copy
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

from .battery import fibonacci_code, sqrt2_minus_1_code
from .errors import DomainError
from .interval import IntervalMarkovMap
from .sft import PointCode, Sft
from .thermo import Potential

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = ("local-escape", "ball-escape", "extremal-index", "hitting", "phi", "survival")


class ConfigError(DomainError):
    """Invalid experiment configuration; the message names the offending field."""


def _bernoulli_system(p=None):
    if p is None:
        return {"sft": {"transition": [[1, 1], [1, 1]]}, "potential": {"constant": -math.log(2)}}
    return {"sft": {"transition": [[1, 1], [1, 1]]}, "potential": {"symbol_values": [math.log(p), math.log(1 - p)]}}


_DOUBLING = {"map": {"breakpoints": ["0", "1/2", "1"], "slopes": ["2", "2"], "offsets": ["0", "-1"], "circle": True}}
_SLOPES = {"map": {"breakpoints": ["0", "1/3", "1"], "slopes": ["3", "3/2"], "offsets": ["0", "-1/2"], "circle": False}}

SYSTEMS = {
    "bernoulli-1/2": _bernoulli_system(),
    "bernoulli-0.7": _bernoulli_system(0.7),
    "chain-r2": {"sft": {"transition": [[1, 1], [1, 1]]}, "potential": {"probabilities": [[0.7, 0.3], [0.4, 0.6]]}},
    "parry-golden-mean": {"sft": {"transition": [[1, 1], [1, 0]]}, "potential": {"constant": 0.0}},
    "doubling": _DOUBLING,
    "slopes-3-1.5": _SLOPES,
}

PRESETS = {
    "doubling-x0": {
        "description": "Doubling map at the fixed point 0; expected rho(x) = 1/2.",
        "system": {"preset": "doubling"},
        "experiment": "local-escape",
        "parameters": {"center": {"cycle": "0"}, "n_range": [2, 14], "hitting": True},
    },
    "doubling-x-1-3": {
        "description": "Doubling map at the period-2 point 1/3; expected rho(x) = 3/4.",
        "system": {"preset": "doubling"},
        "experiment": "local-escape",
        "parameters": {"center": {"x": "1/3"}, "n_range": [2, 14], "hitting": True},
    },
    "doubling-nonperiodic": {
        "description": "Doubling map at sqrt(2) - 1 (30 binary digits); expected rho(x) = 1.",
        "system": {"preset": "doubling"},
        "experiment": "local-escape",
        "parameters": {"center": {"symbols": "".join(map(str, sqrt2_minus_1_code().preperiod))}, "n_range": [2, 14], "hitting": True},
    },
    "slopes-3-1.5-x0": {
        "description": "Map with slopes 3 and 3/2 at the fixed point 0; expected rho(x) = 2/3.",
        "system": {"preset": "slopes-3-1.5"},
        "experiment": "local-escape",
        "parameters": {"center": {"x": "0"}, "n_range": [2, 14], "hitting": True},
    },
    "parry-fixed-point": {
        "description": "Parry measure on the golden-mean shift at the fixed point; theta = 1/phi > 1/2.",
        "system": {"preset": "parry-golden-mean"},
        "experiment": "local-escape",
        "parameters": {"center": {"cycle": "0"}, "n_range": [2, 14], "iterate_power": "auto"},
    },
    "parry-nonperiodic": {
        "description": "Parry measure at the Fibonacci word; expected rho(x) = 1.",
        "system": {"preset": "parry-golden-mean"},
        "experiment": "local-escape",
        "parameters": {"center": {"symbols": "".join(map(str, fibonacci_code().preperiod))}, "n_range": [2, 14]},
    },
    "bernoulli-biased-period3": {
        "description": "Bernoulli(0.7, 0.3) at the period-3 point 001; theta = 0.147.",
        "system": {"preset": "bernoulli-0.7"},
        "experiment": "local-escape",
        "parameters": {"center": {"cycle": "001"}, "n_range": [3, 14], "hitting": True},
    },
    "chain-period2": {
        "description": "Two-state Markov chain at the period-2 point 01; theta = 0.12.",
        "system": {"preset": "chain-r2"},
        "experiment": "local-escape",
        "parameters": {"center": {"cycle": "01"}, "n_range": [2, 14], "hitting": True},
    },
    "ball-doubling-x0": {
        "description": "Ball holes B_r(0) for the doubling map, r = 2^-3 .. 2^-10.",
        "system": {"preset": "doubling"},
        "experiment": "ball-escape",
        "parameters": {"center": {"x": "0"}, "r_sequence": [f"1/{2**k}" for k in range(3, 11)]},
    },
    "ball-slopes-x0": {
        "description": "Ball holes B_r(0) for the slopes (3, 3/2) map, r = 2^-3 .. 2^-10.",
        "system": {"preset": "slopes-3-1.5"},
        "experiment": "ball-escape",
        "parameters": {"center": {"x": "0"}, "r_sequence": [f"1/{2**k}" for k in range(3, 11)]},
    },
    "parry-phi": {
        "description": "phi-mixing coefficients of the Parry measure.",
        "system": {"preset": "parry-golden-mean"},
        "experiment": "phi",
        "parameters": {"k_max": 8, "n_max": 4, "j_max": 4, "over": "cylinders"},
    },
    "bernoulli-survival": {
        "description": "Exact and Monte Carlo survival for the cylinder hole [00] of Bernoulli(1/2).",
        "system": {"preset": "bernoulli-1/2"},
        "experiment": "survival",
        "parameters": {"hole": {"words": ["00"]}, "T": 40, "N": 100000, "seed": 0},
    },
}

DEFAULTS = {
    "local-escape": {"n_range": [2, 14], "hitting": False, "iterate_power": None},
    "ball-escape": {"w": 1.5},
    "extremal-index": {"n_range": [2, 14]},
    "hitting": {"n_range": [2, 14], "s": None},
    "phi": {"k_max": 8, "n_max": 4, "j_max": 4, "over": "cylinders"},
    "survival": {"T": 100, "N": 0, "seed": 0},
}

REQUIRED = {
    "local-escape": ("center",),
    "ball-escape": ("center", "r_sequence"),
    "extremal-index": ("center",),
    "hitting": ("center",),
    "phi": (),
    "survival": ("hole",),
}


def list_presets() -> dict:
    return {name: p["description"] for name, p in PRESETS.items()}


def load_config(source: str) -> dict:
    """Read a JSON/TOML file or look up a preset name."""
    path = Path(source)
    if path.is_file():
        text = path.read_text()
        try:
            if path.suffix.lower() == ".toml":
                return tomllib.loads(text)
            return json.loads(text)
        except (ValueError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"{source}: cannot parse config: {exc}") from None
    if source in PRESETS:
        cfg = copy.deepcopy(PRESETS[source])
        cfg["preset"] = source
        return cfg
    raise ConfigError(f"{source!r} is neither a config file nor a known preset (see `escape-lab presets`)")


def describe(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}")
    return resolve(load_config(name))


def _potential_json(f: Potential) -> dict:
    return {"range": f.range, "table": {f.sft.format_word(w): v for w, v in sorted(f.table.items())}}


def _build_potential(sft: Sft, spec: dict) -> Potential:
    if not isinstance(spec, dict):
        raise ConfigError("system.potential: expected a table")
    keys = {"constant", "symbol_values", "probabilities", "table"} & set(spec)
    if len(keys) != 1:
        raise ConfigError("system.potential: give exactly one of constant, symbol_values, probabilities, table")
    key = keys.pop()
    if key == "constant":
        return Potential.constant(sft, float(spec["constant"]), int(spec.get("range", 1)))
    if key == "symbol_values":
        return Potential.from_symbol_values(sft, [float(v) for v in spec["symbol_values"]])
    if key == "probabilities":
        return Potential.from_probabilities(sft, spec["probabilities"])
    if "range" not in spec:
        raise ConfigError("system.potential.range: required with a table")
    table = {sft.parse_word(w): float(v) for w, v in spec["table"].items()}
    return Potential(sft, int(spec["range"]), table)


def _resolve_system(system) -> dict:
    if not isinstance(system, dict):
        raise ConfigError("system: required (a preset name, an sft with potential, or an interval map)")
    if "preset" in system:
        name = system["preset"]
        if name not in SYSTEMS:
            raise ConfigError(f"system.preset: unknown system {name!r}; known: {', '.join(SYSTEMS)}")
        out = {"name": name, **copy.deepcopy(SYSTEMS[name])}
    else:
        out = copy.deepcopy(system)
    if "map" in out:
        T = IntervalMarkovMap.from_json(out["map"])
        sft, f = T.to_sft()
        out["map"] = T.to_json()
    elif "sft" in out:
        if "transition" not in out["sft"]:
            raise ConfigError("system.sft.transition: required")
        sft = Sft(out["sft"]["transition"])
        if "potential" not in out:
            raise ConfigError("system.potential: required with an sft")
        f = _build_potential(sft, out["potential"])
    else:
        raise ConfigError("system: needs one of preset, sft, map")
    out["sft"] = sft.to_json()
    out["potential"] = _potential_json(f)
    return out


def resolve(cfg: dict) -> dict:
    """Validate ``cfg`` and fill defaults; the result fully determines a run."""
    if not isinstance(cfg, dict):
        raise ConfigError("config: expected a table at top level")
    exp = cfg.get("experiment")
    if exp is None:
        raise ConfigError(f"experiment: required, one of {', '.join(EXPERIMENTS)}")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown {exp!r}; one of {', '.join(EXPERIMENTS)}")
    system = _resolve_system(cfg.get("system"))
    params = dict(DEFAULTS[exp])
    given = cfg.get("parameters", {})
    if not isinstance(given, dict):
        raise ConfigError("parameters: expected a table")
    params.update(given)
    for key in REQUIRED[exp]:
        if params.get(key) is None:
            raise ConfigError(f"parameters.{key}: required for experiment {exp!r}")
    if "n_range" in params:
        nr = params["n_range"]
        if not (isinstance(nr, list) and len(nr) == 2 and all(isinstance(v, int) for v in nr) and 1 <= nr[0] <= nr[1]):
            raise ConfigError("parameters.n_range: expected [n_min, n_max] with 1 <= n_min <= n_max")
    if exp == "ball-escape" and "map" not in system:
        raise ConfigError("system.map: ball-escape needs an interval map system")
    if "center" in params:
        center = params["center"]
        if not isinstance(center, dict) or not {"cycle", "symbols", "x", "preperiod"} & set(center):
            raise ConfigError("parameters.center: expected {cycle}, {preperiod, cycle}, {symbols} or {x}")
        if "x" in center and "map" not in system:
            raise ConfigError("parameters.center.x: a numeric center needs an interval map system")
    output = {"directory": "escape-lab-output", "formats": ["csv", "json"]}
    output.update(cfg.get("output", {}))
    bad = set(output["formats"]) - {"csv", "json"}
    if bad:
        raise ConfigError(f"output.formats: unsupported {sorted(bad)}")
    out = {"experiment": exp, "system": system, "parameters": params, "output": output}
    if "preset" in cfg:
        out["preset"] = cfg["preset"]
    return out


@dataclass
class Built:
    """Objects reconstructed from a resolved config."""

    sft: Sft
    potential: Potential
    map: IntervalMarkovMap | None


def build_system(resolved: dict) -> Built:
    system = resolved["system"]
    sft = Sft(system["sft"]["transition"])
    f = _build_potential(sft, system["potential"])
    T = IntervalMarkovMap.from_json(system["map"]) if "map" in system else None
    return Built(sft, f, T)


def parse_center(center: dict, built: Built, depth: int) -> PointCode:
    """A :class:`PointCode` from a config center; numeric centers are coded through the map."""
    from .interval import point_code

    if "x" in center:
        return point_code(built.map, center["x"], max(depth, 64))
    if "symbols" in center:
        return PointCode.truncated(built.sft.parse_word(str(center["symbols"])))
    return PointCode(built.sft.parse_word(str(center.get("preperiod", ""))), built.sft.parse_word(str(center.get("cycle", ""))))
