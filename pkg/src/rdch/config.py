"""Line-oriented run configuration.

Format: one ``section.key = value`` pair per line, ``#`` starts a comment,
blank lines are ignored. Lists are comma separated. Example::

    mesh.dimension = 1
    mesh.cells = 100
    solver.dt_initial = 1.96e-5   # 0.1 * gamma
    scan.sigmas = 1e-5, 1e-4
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Any, Callable, Optional

from .physics import ModelParams
from .solvers import SolverConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MeshConfig:
    dimension: int = 1
    length: float = 1.0
    cells: int = 100


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "output"
    snapshot_every: int = 0


@dataclass(frozen=True)
class ScanConfig:
    dt_min: float = 1e-8
    dt_max: float = 1e-2
    n_points: int = 49
    sigmas: tuple = (1e-5, 1e-4)
    reference_mean: float = 0.3
    reference_amplitude: float = 0.05


@dataclass(frozen=True)
class StudyConfig:
    mesh_sizes: tuple = (100, 200, 400)
    t_end: float = 0.05
    amplitude: float = 0.05


@dataclass(frozen=True)
class RunConfig:
    mesh: MeshConfig = field(default_factory=MeshConfig)
    params: ModelParams = field(default_factory=ModelParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    scan: ScanConfig = field(default_factory=ScanConfig)
    study: StudyConfig = field(default_factory=StudyConfig)


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _unit_open(v):
    return 0 < v < 1


def _choice(*opts):
    def check(v):
        return v in opts

    return check


def _float_list(text: str) -> tuple:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _int_list(text: str) -> tuple:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _int(text: str) -> int:
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"expected an integer, got {text}")
    return int(v)


def _str(text: str) -> str:
    return text.strip().strip('"').strip("'")


# key -> (target, attribute, parser, check, description of the check)
_Entry = tuple[str, str, Callable[[str], Any], Optional[Callable[[Any], bool]], str]

_SCHEMA: dict[str, _Entry] = {
    "mesh.dimension": ("mesh", "dimension", _int, _choice(1, 2), "1 or 2"),
    "mesh.length": ("mesh", "length", float, _positive, "positive"),
    "mesh.cells": ("mesh", "cells", _int, lambda v: v >= 2, ">= 2"),
    "model.gamma": ("params", "gamma", float, _positive, "positive"),
    "model.sigma": ("params", "sigma", float, _positive, "positive"),
    "model.n_star": ("params", "n_star", float, _unit_open, "in (0, 1)"),
    "model.k_offset": ("params", "k_offset", float, None, ""),
    "model.epsilon": ("params", "epsilon", float, lambda v: 0 <= v < 0.5, "in [0, 1/2)"),
    "solver.scheme": ("solver", "scheme", _str, _choice("linear", "nonlinear"), "linear or nonlinear"),
    "solver.dt_initial": ("solver", "dt_initial", float, _positive, "positive"),
    "solver.dt_max": ("solver", "dt_max", float, _positive, "positive"),
    "solver.t_end": ("solver", "t_end", float, _nonneg, "nonnegative"),
    "solver.picard_tol": ("solver", "picard_tol", float, _positive, "positive"),
    "solver.picard_max_iter": ("solver", "picard_max_iter", _int, _positive, "positive"),
    "solver.picard_relaxation": ("solver", "picard_relaxation", float, lambda v: 0 < v <= 1, "in (0, 1]"),
    "solver.cfl_safety": ("solver", "cfl_safety", float, _unit_open, "in (0, 1)"),
    "solver.dt_growth": ("solver", "dt_growth", float, lambda v: v >= 1, ">= 1"),
    "solver.dt_shrink": ("solver", "dt_shrink", float, _unit_open, "in (0, 1)"),
    "solver.dt_floor_halvings": ("solver", "dt_floor_halvings", _int, _nonneg, "nonnegative"),
    "solver.projection_mode": (
        "solver",
        "projection_mode",
        _str,
        _choice("interpolation", "lumped_h1"),
        "interpolation or lumped_h1",
    ),
    "solver.linear_solver": ("solver", "linear_solver", _str, _choice("direct", "cg"), "direct or cg"),
    "solver.cg_tol": ("solver", "cg_tol", float, _positive, "positive"),
    "solver.cg_max_iter": ("solver", "cg_max_iter", _int, _positive, "positive"),
    "solver.phi_norm": ("solver", "phi_norm", _str, _choice("lumped", "consistent"), "lumped or consistent"),
    "solver.phi_coupling": ("solver", "phi_coupling", _str, _choice("midpoint", "implicit"), "midpoint or implicit"),
    "initial.mean": ("solver", "initial_mean", float, _unit_open, "in (0, 1)"),
    "initial.amplitude": ("solver", "perturbation_amplitude", float, _nonneg, "nonnegative"),
    "initial.profile": (
        "solver",
        "initial_profile",
        _str,
        _choice("random", "cosine", "constant"),
        "random, cosine or constant",
    ),
    "initial.seed": ("solver", "rng_seed", _int, _nonneg, "nonnegative"),
    "output.directory": ("output", "directory", _str, lambda v: bool(v), "non-empty"),
    "output.snapshot_every": ("output", "snapshot_every", _int, _nonneg, "nonnegative"),
    "scan.dt_min": ("scan", "dt_min", float, _positive, "positive"),
    "scan.dt_max": ("scan", "dt_max", float, _positive, "positive"),
    "scan.n_points": ("scan", "n_points", _int, _positive, "positive"),
    "scan.sigmas": ("scan", "sigmas", _float_list, lambda v: len(v) > 0 and all(s > 0 for s in v), "positive values"),
    "scan.reference_mean": ("scan", "reference_mean", float, _unit_open, "in (0, 1)"),
    "scan.reference_amplitude": ("scan", "reference_amplitude", float, _nonneg, "nonnegative"),
    "study.mesh_sizes": ("study", "mesh_sizes", _int_list, lambda v: len(v) >= 2 and min(v) >= 2, "at least two sizes >= 2"),
    "study.t_end": ("study", "t_end", float, _nonneg, "nonnegative"),
    "study.amplitude": ("study", "amplitude", float, _nonneg, "nonnegative"),
}

REQUIRED_KEYS = ("mesh.dimension", "mesh.cells", "solver.dt_initial", "solver.t_end")

# dataclass field -> config key, for cross-field validation messages
_FIELD_KEYS = {(target, attr): key for key, (target, attr, *_rest) in _SCHEMA.items()}


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration text.

    Raises ``ConfigError`` naming the line for syntax errors and the key
    path for unknown keys or invalid values.
    """
    values: dict[str, dict[str, Any]] = {t: {} for t in ("mesh", "params", "solver", "output", "scan", "study")}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, val = (part.strip() for part in line.partition("="))
        if not key or "." not in key:
            raise ConfigError(f"line {lineno}: key must have the form 'section.name', got {key!r}")
        if not val:
            raise ConfigError(f"line {lineno}: missing value for {key}")
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key} (first set on line {seen[key]})")
        seen[key] = lineno
        target, attr, parse, check, desc = _SCHEMA[key]
        try:
            v = parse(val)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {val!r}") from None
        if isinstance(v, float) and not math.isfinite(v):
            raise ConfigError(f"{key}: value must be finite")
        if check is not None and not check(v):
            raise ConfigError(f"{key}: invalid value {val!r} (must be {desc})")
        values[target][attr] = v

    missing = [k for k in REQUIRED_KEYS if k not in seen]
    if missing:
        raise ConfigError("missing required keys: " + ", ".join(missing))
    return _build(values)


def _build(values: dict[str, dict[str, Any]]) -> RunConfig:
    built = {}
    classes = {
        "mesh": MeshConfig,
        "params": ModelParams,
        "solver": SolverConfig,
        "output": OutputConfig,
        "scan": ScanConfig,
        "study": StudyConfig,
    }
    for target, cls in classes.items():
        try:
            built[target] = cls(**values[target])
        except ValueError as exc:
            # name the keys of the section that the message refers to
            msg = str(exc)
            keys = [key for (t, attr), key in _FIELD_KEYS.items() if t == target and attr in msg]
            prefix = ", ".join(keys) if keys else _section_name(target)
            raise ConfigError(f"{prefix}: {msg}") from None
    scan = built["scan"]
    if scan.dt_max < scan.dt_min:
        raise ConfigError("scan.dt_max: must be >= scan.dt_min")
    return RunConfig(**built)


def _section_name(target: str) -> str:
    return "model" if target == "params" else target


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def bundled_config_names() -> list[str]:
    return sorted(p.name for p in resources.files("rdch").joinpath("configs").iterdir() if p.name.endswith(".cfg"))


def bundled_config_text(name: str) -> str:
    return resources.files("rdch").joinpath("configs", name).read_text(encoding="utf-8")


def load_bundled(name: str) -> RunConfig:
    return parse_config(bundled_config_text(name))


def with_overrides(cfg: RunConfig, **sections) -> RunConfig:
    """Copy of ``cfg`` with fields replaced per section, e.g.
    ``with_overrides(cfg, solver={"t_end": 1.0})``."""
    out = cfg
    for target, changes in sections.items():
        out = replace(out, **{target: replace(getattr(out, target), **changes)})
    return out


__all__ = [
    "ConfigError",
    "MeshConfig",
    "OutputConfig",
    "REQUIRED_KEYS",
    "RunConfig",
    "ScanConfig",
    "StudyConfig",
    "bundled_config_names",
    "bundled_config_text",
    "load_bundled",
    "load_config",
    "parse_config",
    "with_overrides",
]
