"""Experiment configuration: TOML loading, schema validation and defaults.

Validation runs before any solver is touched.  Unknown keys are rejected so
that a typo cannot silently fall back to a default.
"""

from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Mapping

from .errors import ConfigInvalid

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class Key:
    kind: type | tuple[type, ...]
    required: bool = False
    check: Callable[[Any], bool] | None = None
    hint: str = ""


def _pos(v) -> bool:
    return v > 0


def _num_or_list(v) -> bool:
    vals = v if isinstance(v, list) else [v]
    return bool(vals) and all(isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0 for x in vals)


def _iotas(v) -> bool:
    vals = v if isinstance(v, list) else [v]
    return bool(vals) and all(x in (-1, 1) for x in vals)


def _unit_open(v) -> bool:
    return 0 < v < 1


NUM = (int, float)

GEOMETRY_CELL = {"h": Key(NUM, True, _pos, "> 0"), "d_l": Key(NUM, True, _pos, "> 0"),
                 "d_r": Key(NUM, False, lambda v: v >= 0, ">= 0")}
GEOMETRY = {**GEOMETRY_CELL, "plus": {"d_l": Key(NUM, False, _pos), "d_r": Key(NUM, False, _pos)},
            "minus": {"d_l": Key(NUM, False, _pos), "d_r": Key(NUM, False, _pos)}}
DISCRETIZATION = {
    "points_per_wavelength": Key(int, False, lambda v: v >= 6, ">= 6"),
    "pml_width": Key(NUM, False, _pos, "> 0 wavelengths"),
    "pml_strength": Key(NUM, False, _pos, "> 0"),
    "pml_order": Key(int, False, lambda v: v >= 1, ">= 1"),
}
CHECKS = Key(dict)
COMMON = {
    "experiment": Key(str),
    "k": Key((int, float, list), True, _num_or_list, "positive number or list"),
    "seed": Key(int, False, lambda v: v >= 0, ">= 0"),
    "out": Key(str),
    "discretization": DISCRETIZATION,
    "checks": CHECKS,
}
SCHWARZ = {
    "n_subdomains": Key(int, True, lambda v: v >= 2, ">= 2"),
    "delta": Key(NUM, True, _pos, "> 0"),
    "width": Key(NUM, False, _pos, "> 0"),
    "total_length": Key(NUM, False, _pos, "> 0"),
    "regime": Key(str, False, lambda v: v in ("outgoing", "impedance"), "'outgoing' or 'impedance'"),
    "iterations": Key(int, False, lambda v: v >= 1, ">= 1"),
    "one_d": Key(bool),
    "matched_impedance": Key(bool),
    "M": Key((int, list), False, lambda v: all(isinstance(x, int) and x >= 0 for x in (v if isinstance(v, list) else [v])),
             "non-negative integer or list"),
    "trials": Key(int, False, lambda v: v >= 1, ">= 1"),
}

SCHEMAS: dict[str, dict] = {
    "solve": {**COMMON, "geometry": GEOMETRY_CELL, "solve": {
        "model": Key(str, True, lambda v: v in ("model1", "model2", "canonical"), "model1, model2 or canonical"),
        "iota": Key(int, True, _iotas, "+1 or -1"),
        "theta0": Key(NUM, True, lambda v: abs(v) < math.pi / 2, "|θ| < π/2"),
        "y0": Key(NUM), "eta": Key(NUM, False, _pos), "max_leak": Key(NUM, False, _pos)}},
    "model1-norm": {**COMMON, "geometry": GEOMETRY_CELL, "maps": {
        "iota": Key(list, False, _iotas, "subset of [-1, 1]"),
        "witness_k": Key(NUM, False, _pos), "theta_offset": Key(NUM, False, _pos),
        "witness_y0": Key(list), "eta": Key(NUM, False, _pos)}},
    "model2-norm": {**COMMON, "geometry": GEOMETRY_CELL, "maps": {
        "iota": Key(list, False, _iotas, "subset of [-1, 1]"), "eta": Key(NUM, False, _pos)}},
    "composite": {**COMMON, "geometry": GEOMETRY, "maps": {
        "mode": Key(str, True, lambda v: v in ("projected", "witness"), "'projected' or 'witness'"),
        "lambda": Key(NUM, False, _unit_open, "in (0, 1)"),
        "n": Key(int, False, lambda v: v >= 1, ">= 1"),
        "words": Key(list, False, lambda v: all(isinstance(w, str) and w and set(w) <= {"+", "-"} for w in v),
                     "strings over '+' and '-'"),
        "padding": Key(int, False, lambda v: v >= 1, ">= 1"),
        "max_word_length": Key(int, False, lambda v: 1 <= v <= 12, "1..12"),
        "eta": Key(NUM, False, _pos),
        "convention": Key(str, False, lambda v: v in ("measure", "plane_wave"), "'measure' or 'plane_wave'")}},
    "oracle-check": {**COMMON, "geometry": GEOMETRY_CELL, "oracle": {
        "theta0": Key(NUM, True, lambda v: abs(v) < math.pi / 2, "|θ| < π/2"),
        "iota": Key(list, False, _iotas, "subset of [-1, 1]"),
        "y0": Key(NUM), "eta": Key(NUM, False, _pos),
        "model": Key(str, False, lambda v: v in ("model1", "model2"), "model1 or model2"),
        "bruteforce_atoms": Key(int, False, lambda v: v >= 0, ">= 0"),
        "max_bounces": Key(int, False, lambda v: v >= 0, ">= 0")}},
    "schwarz-converge": {**COMMON, "schwarz": SCHWARZ},
    "schwarz-power-norm": {**COMMON, "schwarz": SCHWARZ},
    "solver-convergence": {**COMMON, "geometry": GEOMETRY_CELL, "solver": {
        "ppw": Key(list, True, lambda v: len(v) >= 2 and all(isinstance(x, int) and x >= 6 for x in v),
                   "at least two integers >= 6"),
        "theta": Key(NUM, False, lambda v: 0 <= v < math.pi / 2),
        "pml_angles_deg": Key(list, False, lambda v: all(0 <= x < 90 for x in v), "angles in [0, 90)"),
        "pml_ppw": Key(int, False, lambda v: v >= 6)}},
}

REQUIRED_SECTIONS = {
    "solve": ("geometry", "solve"),
    "model1-norm": ("geometry",),
    "model2-norm": ("geometry",),
    "composite": ("geometry", "maps"),
    "oracle-check": ("geometry", "oracle"),
    "schwarz-converge": ("schwarz",),
    "schwarz-power-norm": ("schwarz",),
    "solver-convergence": ("geometry", "solver"),
}


def _validate(table: Mapping[str, Any], schema: Mapping[str, Any], where: str, errors: list[str]) -> None:
    for name, value in table.items():
        rule = schema.get(name)
        path = f"{where}{name}"
        if rule is None:
            errors.append(f"{path}: unknown key")
            continue
        if isinstance(rule, dict):
            if not isinstance(value, dict):
                errors.append(f"{path}: expected a table")
            else:
                _validate(value, rule, path + ".", errors)
            continue
        ok_type = isinstance(value, rule.kind) and not (isinstance(value, bool) and bool not in _as_tuple(rule.kind))
        if not ok_type:
            errors.append(f"{path}: wrong type {type(value).__name__}")
        elif rule.check is not None and not rule.check(value):
            errors.append(f"{path}: invalid value {value!r}" + (f" (expected {rule.hint})" if rule.hint else ""))
    for name, rule in schema.items():
        if isinstance(rule, Key) and rule.required and name not in table:
            errors.append(f"{where}{name}: required")


def _as_tuple(kind) -> tuple:
    return kind if isinstance(kind, tuple) else (kind,)


def validate(experiment: str, cfg: Mapping[str, Any]) -> dict:
    """Return a deep copy of ``cfg`` or raise :class:`ConfigInvalid` listing every problem."""
    if experiment not in SCHEMAS:
        raise ConfigInvalid(f"unknown experiment {experiment!r}")
    errors: list[str] = []
    named = cfg.get("experiment")
    if named is not None and named != experiment:
        errors.append(f"experiment: config is for {named!r}, not {experiment!r}")
    for sec in REQUIRED_SECTIONS[experiment]:
        if sec not in cfg:
            errors.append(f"{sec}: required section")
    _validate(cfg, SCHEMAS[experiment], "", errors)
    if errors:
        raise ConfigInvalid("; ".join(errors))
    out = copy.deepcopy(dict(cfg))
    out["experiment"] = experiment
    out.setdefault("seed", 0)
    return out


def load(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigInvalid(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from exc


def presets() -> list[str]:
    root = resources.files("impedance_maps") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def preset(name: str) -> dict:
    """Packaged configuration ``configs/<name>.toml``."""
    res = resources.files("impedance_maps") / "configs" / f"{name}.toml"
    if not res.is_file():
        raise ConfigInvalid(f"no packaged configuration {name!r}; available: {', '.join(presets())}")
    return tomllib.loads(res.read_text(encoding="utf-8"))


def default(experiment: str) -> dict:
    """Packaged default configuration for ``experiment``."""
    return preset(experiment)
