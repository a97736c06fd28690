"""JSON experiment configuration: defaults, fail-closed validation, overrides.

One schema serves every CLI subcommand, with sections ``solver``,
``features``, ``reduction``, ``opinf``, and ``bench``.  Unknown keys are
rejected so typos cannot silently change a run.  Seeds live in the file, not
the environment, keeping runs self-contained.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .bench import ExperimentConfig, RankPolicy
from .errors import ConfigError
from .fields import FluidProperties, PipeGeometry
from .opinf import RegularizationConfig
from .solver import InletProfile, SolverConfig

# Feature spellings accepted in configs, normalized to solver field names.
FEATURE_ALIASES = {
    "p": "p",
    "u": "Uz",
    "uz": "Uz",
    "u^z": "Uz",
    "k": "k",
    "omega": "omega",
    "w": "omega",
    "nut": "nut",
}


def default_config() -> dict:
    """The full default configuration as a plain dict."""
    return {
        "seed": 0,
        "solver": {
            "geometry": {"diameter": 0.0762, "length": 5.0},
            "fluid": {
                "density": 0.0838,
                "dynamic_viscosity": 8.9e-6,
                "sound_speed": 1305.0,
            },
            "inlet": {
                "base": 21.7,
                "amplitude": 6.51,
                "period": 0.5,
                "shape": "sinusoid",
            },
            "n_cells": 256,
            "friction": 0.02,
            "friction_model": "constant",
            "outlet_pressure": 101325.0,
            "dt_snap": 0.002,
            "n_snapshots": 1000,
            "cfl": 0.9,
            "boundary": "inlet_outlet",
        },
        "features": ["p", "Uz"],
        "reduction": {"energy_threshold": 0.9982, "max_rank": 30, "fixed_rank": None},
        "opinf": {"modelform": "cAH", "lambda_grid": None},
        "bench": {
            "methods": ["opinf", "linear_ar", "persistence", "persistence_full", "mean"],
            "ratios": [0.5, 0.1, 0.4],
            "block": 10,
            "data": None,
            "external": [],
        },
    }


def _merge(defaults, given, path=""):
    """Overlay ``given`` onto ``defaults``, rejecting keys the schema lacks."""
    if not isinstance(given, dict):
        raise ConfigError(f"config section {path or '<root>'} must be an object")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(defaults[key], dict) and defaults[key]:
            out[key] = _merge(defaults[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | None) -> dict:
    """Read and validate a config file; None yields the defaults."""
    if path is None:
        return default_config()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        given = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return _merge(default_config(), given)


def apply_overrides(config: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.key=value`` pairs; values parse as JSON, else strings.

    Overrides run after the file parse and before validation; naming a key
    the schema does not have is a config error.
    """
    out = copy.deepcopy(config)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"override names unknown config key {key!r}")
            node = node[part]
        leaf = parts[-1]
        if not isinstance(node, dict) or leaf not in node:
            raise ConfigError(f"override names unknown config key {key!r}")
        if isinstance(node[leaf], dict) and node[leaf]:
            raise ConfigError(f"override {key!r} targets a section, not a value")
        node[leaf] = value
    return out


def _number(section: dict, key: str, where: str) -> float:
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {v!r}")
    return float(v)


def _integer(section: dict, key: str, where: str) -> int:
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}.{key} must be an integer, got {v!r}")
    return v


def normalize_features(features) -> tuple[str, ...]:
    if not isinstance(features, (list, tuple)) or not features:
        raise ConfigError("features must be a non-empty list")
    out = []
    for f in features:
        key = str(f).lower()
        if key not in FEATURE_ALIASES:
            raise ConfigError(
                f"unknown feature {f!r}; known: {sorted(set(FEATURE_ALIASES.values()))}"
            )
        name = FEATURE_ALIASES[key]
        if name not in out:
            out.append(name)
    return tuple(out)


def build_solver(config: dict) -> tuple[SolverConfig, InletProfile]:
    """Construct the solver configuration and inlet profile from a config dict."""
    s = config["solver"]
    geometry = PipeGeometry(
        diameter=_number(s["geometry"], "diameter", "solver.geometry"),
        length=_number(s["geometry"], "length", "solver.geometry"),
    )
    fluid = FluidProperties(
        density=_number(s["fluid"], "density", "solver.fluid"),
        dynamic_viscosity=_number(s["fluid"], "dynamic_viscosity", "solver.fluid"),
        sound_speed=_number(s["fluid"], "sound_speed", "solver.fluid"),
    )
    inlet = InletProfile(
        base=_number(s["inlet"], "base", "solver.inlet"),
        amplitude=_number(s["inlet"], "amplitude", "solver.inlet"),
        period=_number(s["inlet"], "period", "solver.inlet"),
        shape=s["inlet"]["shape"],
    )
    solver = SolverConfig(
        geometry=geometry,
        fluid=fluid,
        n_cells=_integer(s, "n_cells", "solver"),
        friction=_number(s, "friction", "solver"),
        friction_model=s["friction_model"],
        outlet_pressure=_number(s, "outlet_pressure", "solver"),
        dt_snap=_number(s, "dt_snap", "solver"),
        n_snapshots=_integer(s, "n_snapshots", "solver"),
        cfl=_number(s, "cfl", "solver"),
        boundary=s["boundary"],
        seed=_integer(config, "seed", "<root>"),
    )
    return solver, inlet


def build_regularization(config: dict) -> RegularizationConfig:
    grid = config["opinf"]["lambda_grid"]
    if grid is None:
        return RegularizationConfig()
    if not isinstance(grid, (list, tuple)):
        raise ConfigError("opinf.lambda_grid must be a list of positive numbers")
    return RegularizationConfig(grid=tuple(grid))


def build_rank_policy(config: dict) -> RankPolicy:
    red = config["reduction"]
    fixed = red["fixed_rank"]
    if fixed is not None and (isinstance(fixed, bool) or not isinstance(fixed, int)):
        raise ConfigError("reduction.fixed_rank must be an integer or null")
    return RankPolicy(
        threshold=_number(red, "energy_threshold", "reduction"),
        cap=_integer(red, "max_rank", "reduction"),
        fixed=fixed,
    )


def build_experiment(config: dict, data_path: str | None = None) -> ExperimentConfig:
    """Construct the benchmark description; data_path overrides bench.data."""
    b = config["bench"]
    methods = b["methods"]
    if not isinstance(methods, (list, tuple)) or not methods:
        raise ConfigError("bench.methods must be a non-empty list")
    ratios = b["ratios"]
    if not isinstance(ratios, (list, tuple)) or len(ratios) != 3:
        raise ConfigError("bench.ratios must be a list of three numbers")
    external = []
    for entry in b["external"]:
        if not isinstance(entry, dict) or set(entry) != {"name", "path"}:
            raise ConfigError("bench.external entries must be {name, path} objects")
        external.append((str(entry["name"]), str(entry["path"])))
    path = data_path if data_path is not None else b["data"]
    solver = inlet = None
    if path is None:
        solver, inlet = build_solver(config)
    return ExperimentConfig(
        solver=solver,
        inlet=inlet,
        data_path=path,
        features=normalize_features(config["features"]),
        rank=build_rank_policy(config),
        methods=tuple(methods),
        reg=build_regularization(config),
        modelform=config["opinf"]["modelform"],
        block=_integer(b, "block", "bench"),
        ratios=tuple(float(r) for r in ratios),
        seed=_integer(config, "seed", "<root>"),
        external=tuple(external),
    )
