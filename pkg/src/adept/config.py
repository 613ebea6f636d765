"""INI-style run configuration.

Every section and key is checked against a fixed schema; unknown names are
errors, since a typo in a sensitivity constant would otherwise pass silently.

Sections::

    [chain]                      n_qubits
    [error_model]                cz_split, p_sq_data, p_sq_measure, p_cz, p_readout
    [error_model.<location-id>]  p_base, crosstalk = "<qubit>:<fraction> ..."
    [param.<location-id>.<name>] type, optimum, initial, sensitivity, lower, upper
    [detect]                     include_terminal_round
    [tracker]                    a, zeta0, F, P, N
    [campaign]                   instances, rounds, steps, pattern_order, engine, compensate, tracked_param
    [drift.<qubit>]              amplitude, period, phase
    [optimize]                   alpha, gamma, rho, sigma, step, max_iterations, reeval_every,
                                 lower, upper, instances, rounds, evaluator
    [clock]                      round_time_ns, init_time_ns, end_time_ns, reset_time_ns,
                                 rounds_per_experiment
    [bandwidth]                  detection_rate, n_samples, measurements_per_update, n_patterns,
                                 safety_factor
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .chain import ChainLayout, GateLocation, Kind, Parameter, ParameterRegistry, build_chain, default_registry
from .sim import DEFAULT_P_BASE, ErrorModelConfig, uniform_model


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(",", " ").split())


def _crosstalk(text: str) -> dict[int, float]:
    out = {}
    for item in text.replace(",", " ").split():
        q, frac = item.split(":")
        out[int(q)] = float(frac)
    return out


FIXED: dict[str, dict[str, Callable[[str], Any]]] = {
    "chain": {"n_qubits": int},
    "error_model": {"cz_split": float, "p_sq_data": float, "p_sq_measure": float, "p_cz": float,
                    "p_readout": float},
    "detect": {"include_terminal_round": _bool},
    "tracker": {"a": float, "zeta0": float, "F": float, "P": float, "N": int},
    "campaign": {"instances": int, "rounds": int, "steps": int, "pattern_order": _ints, "engine": str,
                 "compensate": _bool, "tracked_param": str},
    "optimize": {"alpha": float, "gamma": float, "rho": float, "sigma": float, "step": float,
                 "max_iterations": int, "reeval_every": int, "lower": float, "upper": float,
                 "instances": int, "rounds": int, "evaluator": str},
    "clock": {"round_time_ns": float, "init_time_ns": float, "end_time_ns": float,
              "reset_time_ns": float, "rounds_per_experiment": int},
    "bandwidth": {"detection_rate": float, "n_samples": int, "measurements_per_update": int,
                  "n_patterns": int, "safety_factor": float},
}
LOCATION_KEYS = {"p_base": float, "crosstalk": _crosstalk}
PARAM_KEYS = {"type": str, "optimum": float, "initial": float, "sensitivity": float,
              "lower": float, "upper": float}
DRIFT_KEYS = {"amplitude": float, "period": float, "phase": float}


@dataclass
class Config:
    sections: dict[str, dict[str, Any]] = field(default_factory=dict)
    locations: dict[str, dict[str, Any]] = field(default_factory=dict)
    params: dict[tuple[str, str], dict[str, Any]] = field(default_factory=dict)
    drifts: dict[int, dict[str, Any]] = field(default_factory=dict)
    source: str | None = None

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def as_dict(self) -> dict:
        """Plain-data snapshot for run manifests."""
        out: dict[str, Any] = {k: dict(v) for k, v in self.sections.items()}
        for loc, v in self.locations.items():
            out[f"error_model.{loc}"] = {k: (dict(x) if isinstance(x, dict) else x) for k, x in v.items()}
        for (loc, name), v in self.params.items():
            out[f"param.{loc}.{name}"] = dict(v)
        for q, v in self.drifts.items():
            out[f"drift.{q}"] = dict(v)
        return out

    # --- builders ------------------------------------------------------------

    def layout(self, n_qubits: int | None = None) -> ChainLayout:
        return build_chain(n_qubits or self.get("chain", "n_qubits", 9))

    def model(self, layout: ChainLayout) -> ErrorModelConfig:
        kinds = {k: self.get("error_model", f"p_{k.value}", DEFAULT_P_BASE[k]) for k in Kind}
        model = uniform_model(layout, kinds, cz_split=self.get("error_model", "cz_split", 1.0))
        for text, opts in self.locations.items():
            loc = _location(text, layout)
            if "p_base" in opts:
                model.p_base[loc] = opts["p_base"]
            if "crosstalk" in opts:
                for q in opts["crosstalk"]:
                    layout.measure_index(q)
                model.crosstalk[loc] = opts["crosstalk"]
        model.__post_init__()
        return model

    def registry(self, layout: ChainLayout) -> ParameterRegistry:
        reg = default_registry(layout)
        for (text, name), opts in self.params.items():
            loc = _location(text, layout)
            if (loc, name) in reg:
                p = reg.get(loc, name)
                if "type" in opts:
                    p.type = type(p.type)(opts["type"])
            else:
                if "type" not in opts:
                    raise ConfigError(f"new parameter param.{text}.{name} needs a type")
                p = reg.add(loc, Parameter(name, opts["type"], 0.0, 0.0))
            p.optimum = opts.get("optimum", p.optimum)
            p.value = opts.get("initial", p.optimum if "optimum" in opts else p.value)
            p.sensitivity = opts.get("sensitivity", p.sensitivity)
            p.lower = opts.get("lower", p.lower)
            p.upper = opts.get("upper", p.upper)
            p.__post_init__()
        return reg


def _location(text: str, layout: ChainLayout) -> GateLocation:
    from .chain import gate_locations

    loc = GateLocation.parse(text)
    if loc not in set(gate_locations(layout)):
        raise ConfigError(f"location {text!r} does not exist in a {layout.n_qubits}-qubit chain")
    return loc


def _convert(section: str, key: str, raw: str, schema: dict) -> Any:
    if key not in schema:
        raise ConfigError(f"unknown key {key!r} in [{section}]; allowed: {', '.join(sorted(schema))}")
    try:
        return schema[key](raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None


def parse_config(text: str, source: str | None = None) -> Config:
    cp = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str  # keys are case sensitive (F, P, N)
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    cfg = Config(source=source)
    for section in cp.sections():
        items = dict(cp.items(section))
        if section in FIXED:
            cfg.sections[section] = {k: _convert(section, k, v, FIXED[section]) for k, v in items.items()}
        elif section.startswith("error_model."):
            loc = section[len("error_model."):]
            cfg.locations[loc] = {k: _convert(section, k, v, LOCATION_KEYS) for k, v in items.items()}
        elif section.startswith("param."):
            rest = section[len("param."):]
            loc, sep, name = rest.rpartition(".")
            if not sep or not loc or not name:
                raise ConfigError(f"parameter section must be [param.<location>.<name>], got [{section}]")
            cfg.params[(loc, name)] = {k: _convert(section, k, v, PARAM_KEYS) for k, v in items.items()}
        elif section.startswith("drift."):
            try:
                q = int(section[len("drift."):])
            except ValueError:
                raise ConfigError(f"drift section must be [drift.<qubit>], got [{section}]") from None
            cfg.drifts[q] = {k: _convert(section, k, v, DRIFT_KEYS) for k, v in items.items()}
        else:
            raise ConfigError(f"unknown section [{section}]")
    return cfg


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return parse_config(text, str(p))
