"""Run configuration: TOML parsing, validation, canonical form, hashing.

A run config is a TOML document with a handful of scalar keys and one table
per concern (grid, bc, scenario, controller, diagnostics, plus a mode
section).  Parsing is strict: unknown keys anywhere, wrong types, or values
the builders reject all raise ConfigError with the offending key path, so a
typo cannot silently fall back to a default.  The canonical form fills in
every default, which makes the config hash independent of whether defaults
were spelled out.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field

import tomli

from bandflow.scenarios import (
    PsiProfile,
    SymmetricCosh,
    perturbed_initial,
    psi_initial,
    solve_compatibility_k,
    symmetric_initial,
)
from bandflow.solver import (
    AffineRobin,
    ConstantNeumann,
    NonlinearRobin,
    Problem,
    StepController,
    make_graded_grid,
)

__all__ = [
    "ConfigError",
    "RunConfig",
    "build_bc",
    "build_controller",
    "build_grid",
    "build_initial",
    "build_problem",
    "config_hash",
    "load_config",
    "parse_config",
]

MODES = ("single", "sandwich", "refinement", "zero_number")


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending key."""


def _want(value, kinds, path):
    if kinds is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    wanted = kinds if isinstance(kinds, tuple) else (kinds,)
    if isinstance(value, bool) and bool not in wanted:
        raise ConfigError("{}: unexpected boolean".format(path))
    if not isinstance(value, kinds if isinstance(kinds, tuple) else (kinds,)):
        raise ConfigError(
            "{}: expected {}, got {!r}".format(
                path, getattr(kinds, "__name__", kinds), value
            )
        )
    return value


def _finite(value, path):
    if not math.isfinite(value):
        raise ConfigError("{}: must be finite".format(path))
    return value


def _number_list(value, path, length=None):
    value = _want(value, list, path)
    out = []
    for i, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError("{}[{}]: expected number".format(path, i))
        out.append(float(_finite(float(v), "{}[{}]".format(path, i))))
    if length is not None and len(out) != length:
        raise ConfigError("{}: expected {} entries".format(path, length))
    return out


def _check_keys(table, allowed, path):
    for key in table:
        if key not in allowed:
            raise ConfigError(
                "{}.{}: unknown key (allowed: {})".format(path, key, ", ".join(sorted(allowed)))
            )


_GRID_DEFAULTS = {"nodes": 401, "beta": 1.0}
_BC_DEFAULTS = {"family": "nonlinear_robin"}
_SCENARIO_DEFAULTS = {"kind": "symmetric_cosh", "amplitude": 1.0}
_CONTROLLER_KEYS = (
    "dt_init",
    "dt_min",
    "dt_max",
    "newton_tol",
    "newton_max_iters",
    "growth",
    "shrink",
    "fast_iters",
    "fast_streak",
)
_DIAG_DEFAULTS = {
    "enabled": True,
    "speed_window": None,
    "shape_halfwidth": 0.8,
    "shape_monotone_window": 5.0,
    "shape_monotone_tol": 1e-3,
    "envelope_h0": 2.0,
    "envelope_region": [0.1, 0.8],
    "envelope_after": 5.0,
    "envelope_tol": 1e-2,
    "eps": 0.1,
    "t_shift": None,
    "reaper_offset": 0.5,
    "lower_bound_tol": 1e-8,
    "ordering_tol": 1e-10,
}
_SANDWICH_DEFAULTS = {"delta": 0.5, "max_shift": 10.0, "tol": 1e-8}
_REFINEMENT_DEFAULTS = {
    "node_counts": [101, 201, 401, 801],
    "dt": 1e-3,
    "h": 1.0,
    "t_end": 1.0,
}
_SUITE_DEFAULTS = {
    "pairs": 20,
    "crossings": [1, 3, 5],
    "amplitude": 1.25,
    "tol": None,
}


@dataclass
class RunConfig:
    """Validated run description with every default filled in."""

    name: str = "run"
    mode: str = "single"
    seed: int = 0
    t_end: float = 1.0
    snapshot_interval: float = 0.1
    plots: bool = True
    grid: dict = field(default_factory=lambda: dict(_GRID_DEFAULTS))
    bc: dict = field(default_factory=lambda: dict(_BC_DEFAULTS))
    scenario: dict = field(default_factory=lambda: dict(_SCENARIO_DEFAULTS))
    controller: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=lambda: dict(_DIAG_DEFAULTS))
    sandwich: dict = field(default_factory=lambda: dict(_SANDWICH_DEFAULTS))
    refinement: dict = field(default_factory=lambda: dict(_REFINEMENT_DEFAULTS))
    suite: dict = field(default_factory=lambda: dict(_SUITE_DEFAULTS))
    sweep: dict = field(default_factory=dict)

    def canonical(self):
        """Fully populated plain-dict form; the basis of the config hash."""
        return {
            "name": self.name,
            "mode": self.mode,
            "seed": self.seed,
            "t_end": self.t_end,
            "snapshot_interval": self.snapshot_interval,
            "plots": self.plots,
            "grid": dict(self.grid),
            "bc": dict(self.bc),
            "scenario": dict(self.scenario),
            "controller": dict(self.controller),
            "diagnostics": dict(self.diagnostics),
            "sandwich": dict(self.sandwich),
            "refinement": dict(self.refinement),
            "suite": dict(self.suite),
            "sweep": dict(self.sweep),
        }


def config_hash(cfg):
    """sha256 over the canonical JSON form (sorted keys, tight separators)."""
    blob = json.dumps(cfg.canonical(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def parse_config(text, source="<config>"):
    """Parse and validate a TOML run config given as a string."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError("{}: {}".format(source, exc)) from exc
    return _validate(raw)


def load_config(path):
    """Parse and validate a TOML run config file."""
    with open(path, "rb") as fh:
        try:
            raw = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError("{}: {}".format(path, exc)) from exc
    return _validate(raw)


_TOP_KEYS = (
    "name",
    "mode",
    "seed",
    "t_end",
    "snapshot_interval",
    "plots",
    "grid",
    "bc",
    "scenario",
    "controller",
    "diagnostics",
    "sandwich",
    "refinement",
    "suite",
    "sweep",
)


def _validate(raw):
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a table")
    for key in raw:
        if key not in _TOP_KEYS:
            raise ConfigError("unknown top-level key {!r}".format(key))

    cfg = RunConfig()
    cfg.name = _want(raw.get("name", cfg.name), str, "name")
    cfg.mode = _want(raw.get("mode", cfg.mode), str, "mode")
    if cfg.mode not in MODES:
        raise ConfigError("mode: must be one of {}".format(", ".join(MODES)))
    cfg.seed = _want(raw.get("seed", cfg.seed), int, "seed")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError("seed: must fit in an unsigned 64-bit integer")
    cfg.t_end = _finite(float(_want(raw.get("t_end", cfg.t_end), (int, float), "t_end")), "t_end")
    if cfg.t_end <= 0.0:
        raise ConfigError("t_end: must be positive")
    cfg.snapshot_interval = _finite(
        float(_want(raw.get("snapshot_interval", cfg.snapshot_interval), (int, float), "snapshot_interval")),
        "snapshot_interval",
    )
    if cfg.snapshot_interval <= 0.0:
        raise ConfigError("snapshot_interval: must be positive")
    cfg.plots = _want(raw.get("plots", cfg.plots), bool, "plots")

    grid = dict(_GRID_DEFAULTS)
    table = _want(raw.get("grid", {}), dict, "grid")
    _check_keys(table, set(grid), "grid")
    if "nodes" in table:
        grid["nodes"] = _want(table["nodes"], int, "grid.nodes")
    if "beta" in table:
        grid["beta"] = _finite(float(_want(table["beta"], (int, float), "grid.beta")), "grid.beta")
    cfg.grid = grid

    cfg.bc = _validate_bc(_want(raw.get("bc", {}), dict, "bc"))
    cfg.scenario = _validate_scenario(_want(raw.get("scenario", {}), dict, "scenario"))

    controller = {}
    table = _want(raw.get("controller", {}), dict, "controller")
    _check_keys(table, set(_CONTROLLER_KEYS), "controller")
    for key, value in table.items():
        path = "controller.{}".format(key)
        if key in ("newton_max_iters", "fast_iters", "fast_streak"):
            controller[key] = _want(value, int, path)
        else:
            controller[key] = _finite(float(_want(value, (int, float), path)), path)
    cfg.controller = controller

    cfg.diagnostics = _validate_diagnostics(_want(raw.get("diagnostics", {}), dict, "diagnostics"))

    sandwich = dict(_SANDWICH_DEFAULTS)
    table = _want(raw.get("sandwich", {}), dict, "sandwich")
    _check_keys(table, set(sandwich), "sandwich")
    for key in ("delta", "max_shift", "tol"):
        if key in table:
            sandwich[key] = _finite(
                float(_want(table[key], (int, float), "sandwich." + key)), "sandwich." + key
            )
            if sandwich[key] <= 0.0:
                raise ConfigError("sandwich.{}: must be positive".format(key))
    cfg.sandwich = sandwich

    refinement = dict(_REFINEMENT_DEFAULTS)
    table = _want(raw.get("refinement", {}), dict, "refinement")
    _check_keys(table, set(refinement), "refinement")
    if "node_counts" in table:
        counts = _number_list(table["node_counts"], "refinement.node_counts")
        refinement["node_counts"] = [int(c) for c in counts]
        if any(c != int(c) for c in counts) or len(counts) < 3:
            raise ConfigError("refinement.node_counts: need at least three integer levels")
    for key in ("dt", "h", "t_end"):
        if key in table:
            refinement[key] = _finite(
                float(_want(table[key], (int, float), "refinement." + key)), "refinement." + key
            )
            if refinement[key] <= 0.0:
                raise ConfigError("refinement.{}: must be positive".format(key))
    cfg.refinement = refinement

    suite = dict(_SUITE_DEFAULTS)
    table = _want(raw.get("suite", {}), dict, "suite")
    _check_keys(table, set(suite), "suite")
    if "pairs" in table:
        suite["pairs"] = _want(table["pairs"], int, "suite.pairs")
        if suite["pairs"] < 1:
            raise ConfigError("suite.pairs: must be positive")
    if "crossings" in table:
        crossings = _number_list(table["crossings"], "suite.crossings")
        if not crossings or any(c != int(c) or c < 0 for c in crossings):
            raise ConfigError("suite.crossings: need nonnegative integers")
        suite["crossings"] = [int(c) for c in crossings]
    if "amplitude" in table:
        suite["amplitude"] = _finite(
            float(_want(table["amplitude"], (int, float), "suite.amplitude")), "suite.amplitude"
        )
    if "tol" in table and table["tol"] is not None:
        suite["tol"] = _finite(float(_want(table["tol"], (int, float), "suite.tol")), "suite.tol")
    cfg.suite = suite

    sweep = _want(raw.get("sweep", {}), dict, "sweep")
    _check_keys(sweep, {"parameters"}, "sweep")
    if "parameters" in sweep:
        params = _want(sweep["parameters"], dict, "sweep.parameters")
        for key, values in params.items():
            _want(values, list, "sweep.parameters.{}".format(key))
    cfg.sweep = sweep

    if cfg.mode in ("sandwich", "zero_number") and cfg.bc["family"] != "nonlinear_robin":
        raise ConfigError(
            "bc.family: mode {!r} compares height-coupled solutions and "
            "requires nonlinear_robin".format(cfg.mode)
        )

    # builders run all remaining value checks
    build_grid(cfg)
    build_bc(cfg)
    build_initial(cfg)
    build_controller(cfg)
    return cfg


def _validate_bc(table):
    bc = dict(_BC_DEFAULTS)
    family = table.get("family", bc["family"])
    family = _want(family, str, "bc.family")
    if family == "nonlinear_robin":
        _check_keys(table, {"family"}, "bc")
        return {"family": family}
    if family == "constant_neumann":
        _check_keys(table, {"family", "h"}, "bc")
        h = _finite(float(_want(table.get("h", 1.0), (int, float), "bc.h")), "bc.h")
        return {"family": family, "h": h}
    if family == "affine_robin":
        keys = {"family", "alpha_minus", "alpha_plus", "beta_minus", "beta_plus"}
        _check_keys(table, keys, "bc")
        out = {"family": family}
        for key in sorted(keys - {"family"}):
            out[key] = _finite(
                float(_want(table.get(key, 0.0), (int, float), "bc." + key)), "bc." + key
            )
        return out
    raise ConfigError(
        "bc.family: unknown family {!r} (use nonlinear_robin, constant_neumann, affine_robin)".format(family)
    )


def _validate_scenario(table):
    kind = _want(table.get("kind", _SCENARIO_DEFAULTS["kind"]), str, "scenario.kind")
    if kind == "symmetric_cosh":
        _check_keys(table, {"kind", "amplitude"}, "scenario")
        amp = _finite(
            float(_want(table.get("amplitude", 1.0), (int, float), "scenario.amplitude")),
            "scenario.amplitude",
        )
        return {"kind": kind, "amplitude": amp}
    if kind == "cosh":
        _check_keys(table, {"kind", "amplitude", "k"}, "scenario")
        amp = _finite(
            float(_want(table.get("amplitude", 1.0), (int, float), "scenario.amplitude")),
            "scenario.amplitude",
        )
        k = table.get("k")
        if k is not None:
            k = _finite(float(_want(k, (int, float), "scenario.k")), "scenario.k")
            if k <= 0.0:
                raise ConfigError("scenario.k: must be positive")
        return {"kind": kind, "amplitude": amp, "k": k}
    if kind == "psi":
        _check_keys(table, {"kind", "delta"}, "scenario")
        delta = _finite(
            float(_want(table.get("delta", 0.5), (int, float), "scenario.delta")),
            "scenario.delta",
        )
        return {"kind": kind, "delta": delta}
    if kind == "perturbed_cosh":
        keys = {"kind", "amplitude", "bump_amplitude", "bump_center", "bump_width"}
        _check_keys(table, keys, "scenario")
        out = {"kind": kind}
        defaults = {"amplitude": 1.0, "bump_amplitude": 0.3, "bump_center": 0.4, "bump_width": 0.25}
        for key, dflt in sorted(defaults.items()):
            out[key] = _finite(
                float(_want(table.get(key, dflt), (int, float), "scenario." + key)),
                "scenario." + key,
            )
        return out
    raise ConfigError(
        "scenario.kind: unknown kind {!r} (use symmetric_cosh, cosh, psi, perturbed_cosh)".format(kind)
    )


def _validate_diagnostics(table):
    diag = dict(_DIAG_DEFAULTS)
    _check_keys(table, set(diag), "diagnostics")
    for key, value in table.items():
        path = "diagnostics.{}".format(key)
        if key == "enabled":
            diag[key] = _want(value, bool, path)
        elif key in ("speed_window", "envelope_region"):
            if value is not None:
                diag[key] = _number_list(value, path, length=2)
                if diag[key][0] >= diag[key][1]:
                    raise ConfigError("{}: need lower < upper".format(path))
        elif key == "t_shift":
            if value is not None:
                diag[key] = _finite(float(_want(value, (int, float), path)), path)
        else:
            diag[key] = _finite(float(_want(value, (int, float), path)), path)
    if not (0.0 < diag["eps"] < 0.5):
        raise ConfigError("diagnostics.eps: must lie in (0, 1/2)")
    if not (0.0 < diag["shape_halfwidth"] < 1.0):
        raise ConfigError("diagnostics.shape_halfwidth: must lie in (0, 1)")
    return diag


# ---------------------------------------------------------------------------
# builders


def build_grid(cfg):
    grid = cfg.grid
    try:
        return make_graded_grid(int(grid["nodes"]) - 1, grid["beta"])
    except ValueError as exc:
        raise ConfigError("grid: {}".format(exc)) from exc


def build_bc(cfg):
    spec = cfg.bc
    try:
        if spec["family"] == "nonlinear_robin":
            return NonlinearRobin()
        if spec["family"] == "constant_neumann":
            return ConstantNeumann(spec["h"])
        return AffineRobin(
            spec["alpha_minus"], spec["alpha_plus"], spec["beta_minus"], spec["beta_plus"]
        )
    except ValueError as exc:
        raise ConfigError("bc: {}".format(exc)) from exc


def build_initial(cfg):
    spec = cfg.scenario
    try:
        if spec["kind"] == "symmetric_cosh":
            return symmetric_initial(spec["amplitude"])
        if spec["kind"] == "cosh":
            k = spec["k"] if spec["k"] is not None else solve_compatibility_k()
            if spec["amplitude"] <= 0.0:
                raise ValueError("amplitude must be positive")
            return SymmetricCosh(amplitude=spec["amplitude"], k=k)
        if spec["kind"] == "psi":
            return psi_initial(spec["delta"])
        return perturbed_initial(
            spec["amplitude"], spec["bump_amplitude"], spec["bump_center"], spec["bump_width"]
        )
    except ValueError as exc:
        raise ConfigError("scenario: {}".format(exc)) from exc


def build_controller(cfg):
    try:
        return StepController(**cfg.controller)
    except (TypeError, ValueError) as exc:
        raise ConfigError("controller: {}".format(exc)) from exc


def build_problem(cfg):
    """Grid, boundary condition, and initial data assembled into a Problem."""
    grid = build_grid(cfg)
    bc = build_bc(cfg)
    initial = build_initial(cfg)
    try:
        return Problem(grid=grid, bc=bc, initial=initial)
    except ValueError as exc:
        raise ConfigError("problem: {}".format(exc)) from exc


def psi_metadata(initial):
    """Scenario flags recorded in run manifests."""
    flags = {}
    if isinstance(initial, PsiProfile):
        low = float(initial.value(0.0))
        flags["psi_min_height"] = low
        flags["psi_below_unit_height"] = bool(low < 1.0)
    return flags
