"""Command line interface.

Subcommands:

    run      integrate one config (or named preset) and write its store
    sweep    expand a parameter grid and run the cells in a worker pool
    resume   continue a stored run to a later end time
    verify   solver self-checks: refinement order and Jacobian consistency
    report   reprint the summary (and re-render plots) of an existing store

Exit status: 0 on success, 1 when the solver fails mid-run (partial
artifacts are kept), 2 for configuration or store-validation errors (no
artifacts are written for a malformed config).
"""

import argparse
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources

import numpy as np
import tomli

from bandflow._version import __version__
from bandflow.config import ConfigError, _validate, config_hash
from bandflow.runner import resume_store, run_config, _plot_trajectory
from bandflow.solver import NewtonDiverged, StepTooSmall
from bandflow.store import StoreError, _csv_writer, _json_dump, load_trajectory
from bandflow.verification import (
    jacobian_fd_check,
    observed_order,
    random_smooth_state,
    run_refinement_study,
)

__all__ = ["available_presets", "load_preset_text", "main"]

log = logging.getLogger("bandflow")

_MAX_SWEEP_CELLS = 10_000
_JACOBIAN_FAMILIES = ("nonlinear_robin", "constant_neumann", "affine_robin")


# ---------------------------------------------------------------------------
# presets


def _preset_root():
    return resources.files("bandflow").joinpath("presets")


def available_presets():
    """Sorted names of the configs shipped inside the package."""
    names = []
    for entry in _preset_root().iterdir():
        if entry.name.endswith(".toml"):
            names.append(entry.name[: -len(".toml")])
    return sorted(names)


def load_preset_text(name):
    """TOML text of a shipped preset; unknown names list the options."""
    candidate = _preset_root().joinpath(name + ".toml")
    if not candidate.is_file():
        raise ConfigError(
            "unknown preset {!r} (available: {})".format(name, ", ".join(available_presets()))
        )
    return candidate.read_text(encoding="utf-8")


def _read_raw_config(args):
    """Raw config table plus a human-readable source label."""
    if args.preset is not None:
        text = load_preset_text(args.preset)
        source = "preset {}".format(args.preset)
        try:
            raw = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:  # a shipped preset must parse
            raise ConfigError("{}: {}".format(source, exc)) from exc
        return raw, source
    path = args.config
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except OSError as exc:
        raise ConfigError("cannot read config {}: {}".format(path, exc)) from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError("{}: {}".format(path, exc)) from exc
    return raw, path


def _default_outdir(cfg_name):
    return os.path.join("runs", cfg_name)


# ---------------------------------------------------------------------------
# run


def _cmd_run(args):
    raw, source = _read_raw_config(args)
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = _validate(raw)
    outdir = args.out if args.out is not None else _default_outdir(cfg.name)
    log.info("config from %s, store %s, hash %s", source, outdir, config_hash(cfg)[:12])
    result = run_config(cfg, outdir)
    if result["status"] != "complete":
        log.warning("solver stopped early: %s", result.get("failure"))
        return 1
    return 0


# ---------------------------------------------------------------------------
# sweep


def _set_dotted(table, dotted, value):
    parts = dotted.split(".")
    node = table
    for part in parts[:-1]:
        nxt = node.setdefault(part, {})
        if not isinstance(nxt, dict):
            raise ConfigError("sweep.parameters: {!r} does not name a table".format(dotted))
        node = nxt
    node[parts[-1]] = value


def _expand_cells(raw):
    """Cartesian product of the sweep parameter lists, in sorted key order."""
    params = raw.get("sweep", {}).get("parameters", {})
    keys = sorted(params)
    if not keys:
        return keys, []
    lists = [params[k] for k in keys]
    if any(not isinstance(v, list) for v in lists):
        raise ConfigError("sweep.parameters: every entry must be a list")
    if any(not v for v in lists):
        # a factor with no values makes the whole grid empty, not invalid
        return keys, []
    total = 1
    for v in lists:
        total *= len(v)
    if total > _MAX_SWEEP_CELLS:
        raise ConfigError(
            "sweep.parameters: {} cells exceed the limit of {}".format(total, _MAX_SWEEP_CELLS)
        )
    cells = []
    for combo in itertools.product(*lists):
        base = json.loads(json.dumps(raw))  # deep copy of plain TOML data
        base.pop("sweep", None)
        for key, value in zip(keys, combo):
            _set_dotted(base, key, value)
        cells.append((dict(zip(keys, combo)), base))
    return keys, cells


def _init_worker(level):
    logging.basicConfig(level=level, format="%(message)s", stream=sys.stderr)


def _run_cell(payload):
    index, params, raw, outdir = payload
    try:
        cfg = _validate(raw)
        result = run_config(cfg, outdir)
    except ConfigError as exc:
        return {"cell": index, "params": params, "status": "config_error", "error": str(exc)}
    except Exception as exc:  # cell failures are data, the sweep continues
        return {"cell": index, "params": params, "status": "failed", "error": str(exc)}
    out = {"cell": index, "params": params, "store": outdir}
    out.update(
        {
            "status": result["status"],
            "checks_passed": bool(result.get("checks_passed", False)),
            "speed_estimate": result.get("speed_estimate"),
            "final_shape_error": result.get("final_shape_error"),
        }
    )
    if result.get("failure"):
        out["error"] = result["failure"]
    return out


def _cmd_sweep(args):
    raw, source = _read_raw_config(args)
    if args.seed is not None:
        raw["seed"] = args.seed
    base_cfg = _validate(raw)  # validates everything outside the grid once
    keys, cells = _expand_cells(raw)
    outdir = args.out if args.out is not None else _default_outdir(base_cfg.name + "-sweep")
    os.makedirs(outdir, exist_ok=True)
    log.info("sweep from %s: %d cells over %s", source, len(cells), keys or "nothing")

    payloads = []
    for i, (params, cell_raw) in enumerate(cells):
        cell_raw.setdefault("name", base_cfg.name)
        cell_raw["name"] = "{}-cell{:04d}".format(base_cfg.name, i)
        payloads.append((i, params, cell_raw, os.path.join(outdir, "cell_{:04d}".format(i))))

    level = logging.WARNING if args.quiet else logging.INFO
    jobs = args.jobs if args.jobs is not None else min(4, os.cpu_count() or 1)
    jobs = max(1, min(jobs, max(1, len(payloads))))
    if jobs == 1 or len(payloads) <= 1:
        results = [_run_cell(p) for p in payloads]
    else:
        with ProcessPoolExecutor(
            max_workers=jobs, initializer=_init_worker, initargs=(level,)
        ) as pool:
            results = list(pool.map(_run_cell, payloads))

    summary = {
        "format": "bandflow-sweep/1",
        "version": __version__,
        "config_hash": config_hash(base_cfg),
        "parameters": keys,
        "cells": results,
    }
    _json_dump(os.path.join(outdir, "sweep_summary.json"), summary)
    with open(
        os.path.join(outdir, "sweep_summary.csv"), "w", encoding="utf-8", newline=""
    ) as fh:
        writer = _csv_writer(fh, config_hash(base_cfg), "sweep summary")
        writer.writerow(
            ["cell"] + keys + ["status", "checks_passed", "speed_estimate", "final_shape_error"]
        )
        for r in results:
            row = [str(r["cell"])]
            row += [repr(r["params"][k]) for k in keys]
            row += [
                r["status"],
                str(int(bool(r.get("checks_passed", False)))),
                "" if r.get("speed_estimate") is None else format(r["speed_estimate"], ".17g"),
                ""
                if r.get("final_shape_error") is None
                else format(r["final_shape_error"], ".17g"),
            ]
            writer.writerow(row)
    bad = [r for r in results if r["status"] != "complete"]
    log.info("sweep done: %d cells, %d failed", len(results), len(bad))
    for r in bad:
        log.warning("cell %d (%s): %s - %s", r["cell"], r["params"], r["status"], r.get("error"))
    return 0


# ---------------------------------------------------------------------------
# resume


def _cmd_resume(args):
    result = resume_store(args.store, args.t_end)
    if result["status"] == "partial":
        log.warning("solver stopped early: %s", result.get("failure"))
        return 1
    return 0


# ---------------------------------------------------------------------------
# verify


def _cmd_verify(args):
    failures = []
    study = run_refinement_study()
    order = observed_order(study)
    print("refinement study (constant-slope wave, fixed dt):")
    for n, dt, err in study.levels:
        print("  nodes {:>4d}  dt {:g}  sup error {:.3e}".format(n, dt, err))
    print("observed spatial order: {:.3f} (needs >= 1.9)".format(order))
    if order < 1.9:
        failures.append("spatial order {:.3f} < 1.9".format(order))

    from bandflow.scenarios import ExplicitSamples
    from bandflow.solver import (
        AffineRobin,
        ConstantNeumann,
        NonlinearRobin,
        Problem,
        make_graded_grid,
    )

    grid = make_graded_grid(40, 1.0)
    bcs = {
        "nonlinear_robin": NonlinearRobin(),
        "constant_neumann": ConstantNeumann(1.0),
        "affine_robin": AffineRobin(-0.5, 0.5, -1.0, 1.0),
    }
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    print("jacobian check (analytic vs centered differences, 20 states/family):")
    worst_by_family = {}
    for family in _JACOBIAN_FAMILIES:
        problem_bc = bcs[family]
        worst = 0.0
        for _ in range(20):
            u = random_smooth_state(rng, grid)
            # sample-only initial data: the probe state need not satisfy the
            # wall closures, and newton_system never reads the initial data
            problem = Problem(grid=grid, bc=problem_bc, initial=ExplicitSamples(grid.nodes, u))
            dev = jacobian_fd_check(u, problem, scale=1e-6)
            worst = max(worst, dev)
        worst_by_family[family] = worst
        status = "ok" if worst <= 1e-6 else "FAILED"
        print("  {:>16s}: max relative deviation {:.3e}  {}".format(family, worst, status))
        if worst > 1e-6:
            failures.append("{} jacobian deviation {:.3e} > 1e-6".format(family, worst))

    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
        payload = {
            "format": "bandflow-verify/1",
            "version": __version__,
            "refinement": study.to_dict(),
            "observed_order": float(order),
            "jacobian_max_relative_deviation": worst_by_family,
            "passed": not failures,
        }
        _json_dump(os.path.join(args.out, "verify.json"), payload)
    if failures:
        for f in failures:
            print("FAILED: {}".format(f))
        return 1
    print("all solver self-checks passed")
    return 0


# ---------------------------------------------------------------------------
# report


def _load_any_manifest(store_dir):
    path = os.path.join(store_dir, "manifest.json")
    if not os.path.isfile(path):
        alt = os.path.join(store_dir, "sweep_summary.json")
        if os.path.isfile(alt):
            path = alt
        else:
            raise StoreError("{} is not a store (no manifest.json)".format(store_dir))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise StoreError("corrupted {}: {}".format(os.path.basename(path), exc)) from exc


def _print_checks(store_dir):
    path = os.path.join(store_dir, "diagnostics.json")
    if not os.path.isfile(path):
        return
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    for check in payload.get("checks", []):
        print(
            "  check {:<28s} {}  worst margin {:+.3e}".format(
                check["name"],
                "passed" if check["passed"] else "FAILED",
                check["worst_margin"],
            )
        )


def _cmd_report(args):
    manifest = _load_any_manifest(args.store)
    fmt = manifest.get("format", "?")
    print("store   {}".format(args.store))
    print("format  {}  (version {})".format(fmt, manifest.get("version", "?")))
    print("hash    {}".format(manifest.get("config_hash", "?")))
    if fmt == "bandflow-run/1":
        _, traj = load_trajectory(args.store)
        stats = manifest.get("stats", {})
        print("status  {}".format(manifest.get("status", "?")))
        print(
            "span    t = {:g} .. {:g} in {} snapshots".format(
                traj.snapshots[0].t, traj.snapshots[-1].t, len(traj.snapshots)
            )
        )
        print(
            "solver  {} steps, {} newton iterations, {} rejected".format(
                stats.get("steps", "?"),
                stats.get("newton_iterations", "?"),
                stats.get("newton_failures", "?"),
            )
        )
        _print_checks(args.store)
        name = manifest.get("config", {}).get("name", "run")
        _plot_trajectory(args.store, traj, name)
        print("plots   re-rendered under {}".format(os.path.join(args.store, "plots")))
        return 0
    if fmt == "bandflow-composite/1":
        print("status  {}".format(manifest.get("status", "?")))
        print("kind    {}".format(manifest.get("kind", "?")))
        shift = manifest.get("shift")
        print("shift   {}".format("not reached" if shift is None else format(shift, "g")))
        _print_checks(args.store)
        for label, sub in sorted(manifest.get("components", {}).items()):
            print("component {} -> {}".format(label, os.path.join(args.store, sub)))
        return 0
    if fmt == "bandflow-refinement/1":
        print("order   {:.3f}".format(manifest.get("observed_order", float("nan"))))
        print("passed  {}".format(manifest.get("passed")))
        return 0
    if fmt == "bandflow-suite/1":
        print("kind    {}".format(manifest.get("kind", "?")))
        print("passed  {}".format(manifest.get("passed")))
        return 0
    if fmt == "bandflow-sweep/1":
        cells = manifest.get("cells", [])
        bad = [c for c in cells if c.get("status") != "complete"]
        print("cells   {} total, {} failed".format(len(cells), len(bad)))
        for c in cells:
            print(
                "  cell {:>4d}  {:<10s} {}".format(
                    c.get("cell", -1), c.get("status", "?"), c.get("params", {})
                )
            )
        return 0
    raise StoreError("unsupported store format {!r}".format(fmt))


# ---------------------------------------------------------------------------
# parser


def _add_config_source(parser):
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--config", metavar="PATH", help="TOML run configuration")
    group.add_argument(
        "--preset",
        metavar="NAME",
        help="shipped configuration; one of: " + ", ".join(available_presets()),
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bandflow",
        description="Curvature flow in a band: simulation runs, comparisons, reports.",
    )
    parser.add_argument("--version", action="version", version="bandflow " + __version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate one configuration")
    _add_config_source(p_run)
    p_run.add_argument("--out", metavar="DIR", help="store directory (default runs/<name>)")
    p_run.add_argument("--seed", type=int, metavar="U64", help="override the config seed")
    p_run.add_argument("--quiet", action="store_true", help="log warnings only")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a parameter grid in parallel")
    _add_config_source(p_sweep)
    p_sweep.add_argument("--out", metavar="DIR", help="sweep directory (default runs/<name>-sweep)")
    p_sweep.add_argument("--jobs", type=int, metavar="N", help="worker processes")
    p_sweep.add_argument("--seed", type=int, metavar="U64", help="override the config seed")
    p_sweep.add_argument("--quiet", action="store_true", help="log warnings only")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_resume = sub.add_parser("resume", help="continue a stored run to a later time")
    p_resume.add_argument("store", metavar="STORE", help="existing run store directory")
    p_resume.add_argument("--t-end", type=float, required=True, metavar="T", help="new end time")
    p_resume.add_argument("--quiet", action="store_true", help="log warnings only")
    p_resume.set_defaults(func=_cmd_resume)

    p_verify = sub.add_parser("verify", help="solver self-checks (refinement, Jacobian)")
    p_verify.add_argument("--out", metavar="DIR", help="also write verify.json here")
    p_verify.add_argument("--seed", type=int, metavar="U64", help="seed for the random states")
    p_verify.add_argument("--quiet", action="store_true", help="log warnings only")
    p_verify.set_defaults(func=_cmd_verify)

    p_report = sub.add_parser("report", help="summarize an existing store")
    p_report.add_argument("store", metavar="STORE", help="store directory")
    p_report.add_argument("--quiet", action="store_true", help="log warnings only")
    p_report.set_defaults(func=_cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
        format="%(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print("config error: {}".format(exc), file=sys.stderr)
        return 2
    except StoreError as exc:
        print("store error: {}".format(exc), file=sys.stderr)
        return 2
    except (NewtonDiverged, StepTooSmall) as exc:
        print("solver failure: {}".format(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
