"""JSON run configuration.

Top-level keys (all optional, unknown keys rejected)::

    {
      "domain":       {"length": 1.0, "horizon": 1.0},
      "coefficients": {"rho_a": 1.864e-7, "mu": "sin(pi*x)",
                       "r": {"kind": "table", "x": [0, 1], "y": [2, 3]},
                       "kappa": {"kind": "constant", "value": 3.5875e-5, "lower_bound": 3e-5}},
      "tip":          {"tip_length": 0.2, "half_angle": 0.08727, "coupling_override": null},
      "grid":         {"elements": 100, "steps": null, "startup": "sdirk"},
      "cg":           {"max_iterations": 200, "morozov_epsilon": 1.2, "gradient_floor": 1e-12,
                       "restart_every": 50, "stagnation_rtol": 1e-9,
                       "coupling_mode": "consistent", "stop_at_discrepancy": true},
      "noise":        {"gamma": 0.03, "seed": 42},
      "output_dir":   "runs/test1"
    }

A coefficient is a number (constant), a string (expression in ``x``) or an
object with ``kind`` and optional ``lower_bound``/``upper_bound``. Missing
sections fall back to the first benchmark problem.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .beam_model import (
    COEFFICIENT_NAMES, BeamDomain, BeamProblem, CoefficientField, TipGeometry,
)
from .cg import CGConfig
from .errors import ValidationError
from .experiments import NoiseSpec
from .reporting import config_hash
from .transient import DEFAULT_STARTUP, STARTUP_RULES

SECTIONS = ("domain", "coefficients", "tip", "grid", "cg", "noise", "output_dir")

DEFAULTS = {
    "domain": {"length": 1.0, "horizon": 1.0},
    "coefficients": {"rho_a": 1.864e-7, "mu": 8.16e-6, "r": 2.265e-3, "kappa": 3.5875e-5},
    "tip": {"tip_length": 0.2, "half_angle": math.pi / 36,
            "coupling_override": math.cos(math.pi / 36) / (5 * math.pi)},
    "grid": {"elements": 100, "steps": None, "startup": DEFAULT_STARTUP},
    "cg": {"max_iterations": 200, "morozov_epsilon": 1.2, "gradient_floor": 1e-12,
           "restart_every": 50, "stagnation_rtol": 1e-9, "coupling_mode": "consistent",
           "stop_at_discrepancy": True},
    "noise": {"gamma": 0.0, "seed": 42},
    "output_dir": None,
}

_COEFF_KEYS = {"kind", "value", "expression", "x", "y", "lower_bound", "upper_bound"}


@dataclass(frozen=True)
class RunConfig:
    problem: BeamProblem
    elements: int
    steps: int | None
    startup: str
    cg: CGConfig
    noise: NoiseSpec
    output_dir: str | None
    raw: dict

    @property
    def digest(self) -> str:
        """Hash of the effective settings; the output location is not part of it."""
        return config_hash({k: v for k, v in self.raw.items() if k != "output_dir"})


def _check_keys(where: str, section: dict, allowed) -> None:
    if not isinstance(section, dict):
        raise ValidationError(f"{where} must be an object")
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ValidationError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _number(where, value, integer=False, optional=False):
    if value is None and optional:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{where} must be a number, got {value!r}")
    if integer:
        if int(value) != value:
            raise ValidationError(f"{where} must be an integer, got {value!r}")
        return int(value)
    return float(value)


def parse_coefficient(name: str, spec) -> CoefficientField:
    where = f"coefficients.{name}"
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return CoefficientField.constant(spec)
    if isinstance(spec, str):
        return CoefficientField.expression(spec)
    _check_keys(where, spec, _COEFF_KEYS)
    kind = spec.get("kind")
    bounds = {k: _number(f"{where}.{k}", spec.get(k), optional=True)
              for k in ("lower_bound", "upper_bound")}
    if kind == "constant":
        return CoefficientField("constant", _number(f"{where}.value", spec.get("value")), **bounds)
    if kind == "expression":
        text = spec.get("expression", spec.get("value"))
        if not isinstance(text, str):
            raise ValidationError(f"{where}.expression must be a string")
        return CoefficientField("expression", text, **bounds)
    if kind == "table":
        if "x" not in spec or "y" not in spec:
            raise ValidationError(f"{where} table needs 'x' and 'y'")
        return CoefficientField("table", (spec["x"], spec["y"]), **bounds)
    raise ValidationError(f"{where}.kind must be constant, expression or table")


def merged(raw: dict | None) -> dict:
    """``raw`` laid over the defaults, after schema checks of every section."""
    raw = {} if raw is None else raw
    _check_keys("config", raw, SECTIONS)
    out = copy.deepcopy(DEFAULTS)
    for key in SECTIONS:
        if key not in raw:
            continue
        if key == "output_dir":
            if raw[key] is not None and not isinstance(raw[key], str):
                raise ValidationError("output_dir must be a string")
            out[key] = raw[key]
        elif key == "coefficients":
            _check_keys("coefficients", raw[key], COEFFICIENT_NAMES)
            out[key].update(copy.deepcopy(raw[key]))
        else:
            _check_keys(key, raw[key], DEFAULTS[key])
            out[key].update(raw[key])
    return out


def build_config(raw: dict | None = None) -> RunConfig:
    cfg = merged(raw)
    d, tip, grid, cg, noise = (cfg[k] for k in ("domain", "tip", "grid", "cg", "noise"))
    domain = BeamDomain(_number("domain.length", d["length"]),
                        _number("domain.horizon", d["horizon"]))
    coeffs = {name: parse_coefficient(name, cfg["coefficients"][name]) for name in COEFFICIENT_NAMES}
    geometry = TipGeometry(
        _number("tip.tip_length", tip["tip_length"]),
        _number("tip.half_angle", tip["half_angle"]),
        _number("tip.coupling_override", tip["coupling_override"], optional=True),
    )
    problem = BeamProblem(domain, tip=geometry, **coeffs)
    if grid["startup"] not in STARTUP_RULES:
        raise ValidationError(f"grid.startup must be one of {STARTUP_RULES}")
    elements = _number("grid.elements", grid["elements"], integer=True)
    if elements < 1:
        raise ValidationError("grid.elements must be at least 1")
    steps = _number("grid.steps", grid["steps"], integer=True, optional=True)
    if not isinstance(cg["stop_at_discrepancy"], bool):
        raise ValidationError("cg.stop_at_discrepancy must be true or false")
    noise_spec = NoiseSpec(_number("noise.gamma", noise["gamma"]),
                           _number("noise.seed", noise["seed"], integer=True))
    cg_cfg = CGConfig(
        max_iterations=_number("cg.max_iterations", cg["max_iterations"], integer=True),
        morozov_epsilon=_number("cg.morozov_epsilon", cg["morozov_epsilon"]),
        noise_level=noise_spec.gamma,
        gradient_floor=_number("cg.gradient_floor", cg["gradient_floor"]),
        restart_every=_number("cg.restart_every", cg["restart_every"], integer=True),
        stagnation_rtol=_number("cg.stagnation_rtol", cg["stagnation_rtol"]),
        coupling_mode=str(cg["coupling_mode"]),
        stop_at_discrepancy=cg["stop_at_discrepancy"],
    )
    return RunConfig(problem, elements, steps, grid["startup"], cg_cfg, noise_spec,
                     cfg["output_dir"], cfg)


def load_config(path) -> dict:
    """Raw JSON mapping of a config file (validated by ``build_config``)."""
    try:
        with Path(path).open() as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {path} is not valid JSON: {exc}") from None
    merged(raw)
    return raw
