"""Experiment orchestration: configs in, trajectory stores out.

One function per run mode (single, sandwich, refinement, zero_number) plus
store resumption.  Each writes a deterministic artifact directory via
`bandflow.store` and returns a small result dict the CLI turns into exit
codes and log lines.  Solver failures (StepTooSmall) still write the
partial store before propagating, so no computed state is lost.
"""

import logging
import math
import os

import numpy as np

from bandflow._version import __version__
from bandflow.closed_forms import LIMIT_SPEED, grim_reaper_speed, interior_grim_reaper
from bandflow.config import (
    build_bc,
    build_controller,
    build_grid,
    build_initial,
    build_problem,
    config_hash,
    psi_metadata,
)
from bandflow.diagnostics import (
    CheckReport,
    gradient_envelope_check,
    gradient_zero_curves,
    interior_min_gradient_check,
    lower_height_bound_margin,
    shape_error,
    verify_nonincreasing_intersections,
    verify_ordering,
    verify_reaper_family_trichotomy,
    wave_speed_estimate,
)
from bandflow.plots import render_line_plot
from bandflow.scenarios import crossing_pair, psi_initial
from bandflow.solver import Problem, State, StepTooSmall, Trajectory, advance
from bandflow.store import (
    StoreError,
    default_series_rows,
    load_dt_history,
    load_manifest,
    load_trajectory,
    write_diagnostics,
    write_run_store,
    write_series,
    _json_dump,
)
from bandflow.verification import observed_order, run_refinement_study

__all__ = [
    "resume_store",
    "run_config",
    "run_refinement",
    "run_sandwich",
    "run_single",
    "run_zero_number",
]

log = logging.getLogger("bandflow")


def run_config(cfg, outdir):
    """Dispatch a validated config to its mode runner."""
    runner = {
        "single": run_single,
        "sandwich": run_sandwich,
        "refinement": run_refinement,
        "zero_number": run_zero_number,
    }[cfg.mode]
    return runner(cfg, outdir)


# ---------------------------------------------------------------------------
# diagnostics assembly


def _speed_target(bc):
    if bc.family == "nonlinear_robin":
        return LIMIT_SPEED
    if bc.family == "constant_neumann":
        return grim_reaper_speed(bc.h)
    return None


def _report_speed(reports):
    for r in reports:
        if r.name == "wave_speed":
            return r.series["speed"][0]
    return None


def trajectory_checks(traj, cfg, bc, initial, t_shift=None):
    """Check reports for one trajectory under the configured diagnostics."""
    diag = cfg.diagnostics
    if not diag["enabled"]:
        return []
    reports = []
    shape_hw = diag["shape_halfwidth"]
    times = [s.t for s in traj.snapshots]
    shapes = [shape_error(s, traj.grid, shape_hw) for s in traj.snapshots]

    target = _speed_target(bc)
    window = diag["speed_window"]
    if target is not None and window is not None and times[-1] >= window[1] - 1e-9:
        speed = wave_speed_estimate(traj, window)
        dev = abs(speed - target)
        tol = 0.02 if bc.family == "nonlinear_robin" else 1e-3
        reports.append(
            CheckReport(
                name="wave_speed",
                parameters={"window": list(window), "target": float(target), "tol": tol},
                passed=dev <= tol,
                worst_margin=float(tol - dev),
                series={"speed": [float(speed)]},
            )
        )

    if bc.family != "nonlinear_robin":
        # the remaining checks compare against the interior limit profile,
        # which only attracts under the slope-matching wall condition
        return reports

    win = diag["shape_monotone_window"]
    tol = diag["shape_monotone_tol"]
    t_lo = times[-1] - win
    idx = [i for i, t in enumerate(times) if t >= t_lo - 1e-9]
    worst_rate = -math.inf
    for i, jj in zip(idx, idx[1:]):
        dt = times[jj] - times[i]
        if dt > 0:
            worst_rate = max(worst_rate, (shapes[jj] - shapes[i]) / dt)
    if math.isfinite(worst_rate):
        reports.append(
            CheckReport(
                name="shape_monotone",
                parameters={"window": win, "tol_per_unit_time": tol, "halfwidth": shape_hw},
                passed=worst_rate <= tol,
                worst_margin=float(tol - worst_rate),
                series={"t": times, "shape_error": shapes},
            )
        )

    after = diag["envelope_after"]
    env_t, env_margin = [], []
    env_pass = True
    worst_env = math.inf
    for s in traj.snapshots:
        if s.t < after - 1e-9:
            continue
        rep = gradient_envelope_check(
            s, traj.grid, diag["envelope_h0"], tuple(diag["envelope_region"]), diag["envelope_tol"]
        )
        env_t.append(s.t)
        env_margin.append(rep.worst_margin)
        env_pass = env_pass and rep.passed
        worst_env = min(worst_env, rep.worst_margin)
    if env_t:
        reports.append(
            CheckReport(
                name="gradient_envelope",
                parameters={
                    "h0": diag["envelope_h0"],
                    "region": list(diag["envelope_region"]),
                    "after_time": after,
                    "tol": diag["envelope_tol"],
                },
                passed=env_pass,
                worst_margin=float(worst_env + diag["envelope_tol"]),
                series={"t": env_t, "worst_margin": env_margin},
            )
        )

    u0 = np.asarray(initial.value(traj.grid.nodes), dtype=float)
    if float(np.min(u0)) >= 1.0 - 1e-12:
        tol = diag["lower_bound_tol"]
        margins = [lower_height_bound_margin(s, traj.grid) for s in traj.snapshots]
        worst = min(margins)
        reports.append(
            CheckReport(
                name="lower_height_bound",
                parameters={"tol": tol},
                passed=worst >= -tol,
                worst_margin=float(worst + tol),
                series={"t": times, "margin": margins},
            )
        )

    shift = diag["t_shift"]
    if shift is None:
        shift = t_shift if t_shift is not None else cfg.t_end
    mg_t, mg_left, mg_right = [], [], []
    mg_pass = True
    m1 = None
    for s in traj.snapshots:
        rep = interior_min_gradient_check(s, traj.grid, diag["eps"], shift)
        m1 = rep.m1
        mg_t.append(s.t)
        mg_left.append(rep.min_left)
        mg_right.append(rep.min_right)
        mg_pass = mg_pass and rep.passed
    reports.append(
        CheckReport(
            name="interior_min_gradient",
            parameters={"eps": diag["eps"], "t_shift": float(shift), "m1": float(m1)},
            passed=mg_pass,
            worst_margin=float(m1 - max(max(mg_left), max(mg_right))),
            series={"t": mg_t, "min_left": mg_left, "min_right": mg_right},
        )
    )
    reports.append(gradient_zero_curves(traj, diag["eps"], shift))

    center0 = float(np.interp(0.0, traj.grid.nodes, u0))
    offset = diag["reaper_offset"]
    if offset < center0:
        reports.append(verify_reaper_family_trichotomy(traj, offset))
    return reports


# ---------------------------------------------------------------------------
# plots


def _plot_trajectory(outdir, traj, cfg_name):
    plotdir = os.path.join(outdir, "plots")
    os.makedirs(plotdir, exist_ok=True)
    x = traj.grid.nodes
    n_snap = len(traj.snapshots)
    picks = sorted({0, n_snap // 4, n_snap // 2, (3 * n_snap) // 4, n_snap - 1})
    curves = []
    for i in picks:
        s = traj.snapshots[i]
        curves.append({"x": x, "y": s.u, "label": "t = {:g}".format(s.t)})
    final = traj.snapshots[-1]
    center = float(np.interp(0.0, x, final.u))
    inner = np.abs(x) < 1.0
    curves.append(
        {
            "x": x[inner],
            "y": interior_grim_reaper(x[inner]) + center,
            "label": "limit profile + u(0, t_end)",
            "dash": True,
        }
    )
    render_line_plot(
        os.path.join(plotdir, "profiles.svg"),
        curves,
        title="{}: solution profiles".format(cfg_name),
        xlabel="x",
        ylabel="u",
    )
    ts = [s.t for s in traj.snapshots]
    centers = [float(np.interp(0.0, x, s.u)) for s in traj.snapshots]
    ref = [centers[0] + LIMIT_SPEED * (t - ts[0]) for t in ts]
    render_line_plot(
        os.path.join(plotdir, "ascent.svg"),
        [
            {"x": ts, "y": centers, "label": "u(0, t)"},
            {"x": ts, "y": ref, "label": "slope pi/2 reference", "dash": True},
        ],
        title="{}: center height ascent".format(cfg_name),
        xlabel="t",
        ylabel="u(0, t)",
    )


# ---------------------------------------------------------------------------
# mode runners


def _advance_store(cfg, problem, ctrl, outdir, t_end, label=None):
    """Advance and always write the store, even on step failure."""
    canonical = cfg.canonical()
    h = config_hash(cfg)
    status = "complete"
    failure = None
    try:
        traj = advance(
            problem,
            t_end,
            ctrl,
            snapshot_interval=cfg.snapshot_interval,
            provenance={"config": canonical, "config_hash": h},
        )
    except StepTooSmall as exc:
        traj = exc.trajectory
        status = "partial"
        failure = str(exc)
    flags = {"outside_convergence_theory": bool(problem.bc.outside_convergence_theory)}
    flags.update(psi_metadata(problem.initial))
    extra = {"t_reached": float(traj.snapshots[-1].t), "t_end": float(t_end)}
    if label is not None:
        extra["component"] = label
    if failure is not None:
        extra["failure"] = failure
    os.makedirs(outdir, exist_ok=True)
    write_run_store(outdir, canonical, h, traj, status=status, flags=flags, extra=extra)
    header, rows = default_series_rows(traj, cfg.diagnostics["shape_halfwidth"])
    write_series(outdir, rows, header, h)
    return traj, status, failure


def run_single(cfg, outdir):
    problem = build_problem(cfg)
    ctrl = build_controller(cfg)
    log.info(
        "run %s: mode=single bc=%s N=%d beta=%g t_end=%g",
        cfg.name,
        problem.bc.family,
        problem.grid.n_nodes,
        problem.grid.beta,
        cfg.t_end,
    )
    traj, status, failure = _advance_store(cfg, problem, ctrl, outdir, cfg.t_end)
    h = config_hash(cfg)
    reports = trajectory_checks(traj, cfg, problem.bc, problem.initial)
    write_diagnostics(outdir, reports, h)
    if cfg.plots:
        _plot_trajectory(outdir, traj, cfg.name)
    checks_passed = all(r.passed for r in reports)
    log.info(
        "run %s: %s after %d steps, %d checks, %s",
        cfg.name,
        status,
        traj.metadata.get("steps", 0),
        len(reports),
        "all passed" if checks_passed else "SOME CHECKS FAILED",
    )
    return {
        "status": status,
        "failure": failure,
        "checks_passed": checks_passed,
        "store": outdir,
        "t_reached": float(traj.snapshots[-1].t),
        "speed_estimate": _report_speed(reports),
        "final_shape_error": shape_error(
            traj.snapshots[-1], traj.grid, cfg.diagnostics["shape_halfwidth"]
        ),
    }


def _shifted_view(traj, offset_index, count, shift):
    states = [State(s.t - shift, s.u) for s in traj.snapshots[offset_index : offset_index + count]]
    return Trajectory(grid=traj.grid, snapshots=states, metadata={}, provenance={})


def _truncated_view(traj, count):
    return Trajectory(
        grid=traj.grid, snapshots=list(traj.snapshots[:count]), metadata={}, provenance={}
    )


def run_sandwich(cfg, outdir):
    """Base run plus a small convex companion, with two-sided ordering checks.

    The companion solution starts below the base data; once its minimum has
    climbed past the base data's maximum (first snapshot time T where that
    holds strictly), the time-shifted companion dominates the base run, so

        companion(x, t)  <  base(x, t)  <  companion(x, t + T)

    is checked snapshotwise on [0, t_end] with the configured tolerance.
    """
    grid = build_grid(cfg)
    bc = build_bc(cfg)
    ctrl = build_controller(cfg)
    base_initial = build_initial(cfg)
    psi = psi_initial(cfg.sandwich["delta"])
    base_problem = Problem(grid=grid, bc=bc, initial=base_initial)
    psi_problem = Problem(grid=grid, bc=bc, initial=psi)
    max_shift = cfg.sandwich["max_shift"]
    tol = cfg.sandwich["tol"]
    log.info(
        "run %s: mode=sandwich N=%d t_end=%g companion horizon=%g",
        cfg.name,
        grid.n_nodes,
        cfg.t_end,
        cfg.t_end + max_shift,
    )

    base_traj, base_status, base_fail = _advance_store(
        cfg, base_problem, ctrl, os.path.join(outdir, "base"), cfg.t_end, label="base"
    )
    psi_traj, psi_status, psi_fail = _advance_store(
        cfg, psi_problem, ctrl, os.path.join(outdir, "psi"), cfg.t_end + max_shift, label="psi"
    )
    status = "complete" if base_status == psi_status == "complete" else "partial"
    h = config_hash(cfg)

    shift = None
    shift_index = None
    reports = []
    if status == "complete":
        base0_max = float(np.max(base_traj.snapshots[0].u))
        for i, s in enumerate(psi_traj.snapshots):
            if float(np.min(s.u)) > base0_max:
                shift = s.t
                shift_index = i
                break
        n_base = len(base_traj.snapshots)
        lower = verify_ordering(_truncated_view(psi_traj, n_base), base_traj, tol)
        lower.name = "sandwich_lower"
        reports.append(lower)
        if shift is not None and shift_index + n_base <= len(psi_traj.snapshots):
            upper = verify_ordering(
                base_traj, _shifted_view(psi_traj, shift_index, n_base, shift), tol
            )
            upper.name = "sandwich_upper"
            reports.append(upper)
        else:
            reports.append(
                CheckReport(
                    name="sandwich_upper",
                    parameters={"max_shift": max_shift, "tol": tol},
                    passed=False,
                    worst_margin=-math.inf,
                    series={},
                )
            )
            log.warning("run %s: companion never overtook the base data", cfg.name)
        reports.extend(
            trajectory_checks(base_traj, cfg, bc, base_initial, t_shift=shift)
        )

    write_diagnostics(outdir, reports, h)
    payload = {
        "format": "bandflow-composite/1",
        "version": __version__,
        "kind": "sandwich",
        "config": cfg.canonical(),
        "config_hash": h,
        "status": status,
        "components": {"base": "base", "psi": "psi"},
        "shift": None if shift is None else float(shift),
        "max_shift": float(max_shift),
        "tol": float(tol),
        "flags": psi_metadata(psi),
    }
    _json_dump(os.path.join(outdir, "manifest.json"), payload)
    if cfg.plots and status == "complete":
        plotdir = os.path.join(outdir, "plots")
        os.makedirs(plotdir, exist_ok=True)
        ts = [s.t for s in base_traj.snapshots]
        base_c = [float(np.interp(0.0, grid.nodes, s.u)) for s in base_traj.snapshots]
        psi_c = [float(np.interp(0.0, grid.nodes, s.u)) for s in psi_traj.snapshots]
        curves = [
            {"x": ts, "y": base_c, "label": "base u(0, t)"},
            {"x": [s.t for s in psi_traj.snapshots], "y": psi_c, "label": "companion u(0, t)"},
        ]
        if shift is not None:
            shifted = [
                float(np.interp(0.0, grid.nodes, s.u))
                for s in psi_traj.snapshots[shift_index : shift_index + len(ts)]
            ]
            curves.append(
                {"x": ts[: len(shifted)], "y": shifted, "label": "companion shifted by T", "dash": True}
            )
        render_line_plot(
            os.path.join(plotdir, "sandwich.svg"),
            curves,
            title="{}: sandwich ascent".format(cfg.name),
            xlabel="t",
            ylabel="u(0, t)",
        )
        _plot_trajectory(os.path.join(outdir, "base"), base_traj, cfg.name + " (base)")
    checks_passed = all(r.passed for r in reports) and status == "complete"
    log.info(
        "run %s: %s, shift T=%s, %s",
        cfg.name,
        status,
        "none" if shift is None else "{:g}".format(shift),
        "all checks passed" if checks_passed else "SOME CHECKS FAILED",
    )
    return {
        "status": status,
        "failure": base_fail or psi_fail,
        "checks_passed": checks_passed,
        "store": outdir,
        "shift": shift,
        "speed_estimate": _report_speed(reports),
        "final_shape_error": shape_error(
            base_traj.snapshots[-1], base_traj.grid, cfg.diagnostics["shape_halfwidth"]
        ),
    }


def run_refinement(cfg, outdir):
    ref = cfg.refinement
    log.info(
        "run %s: mode=refinement levels=%s dt=%g h=%g t_end=%g",
        cfg.name,
        ref["node_counts"],
        ref["dt"],
        ref["h"],
        ref["t_end"],
    )
    study = run_refinement_study(
        node_counts=tuple(ref["node_counts"]), dt=ref["dt"], h=ref["h"], t_end=ref["t_end"]
    )
    order = observed_order(study)
    h = config_hash(cfg)
    os.makedirs(outdir, exist_ok=True)
    from bandflow.store import _csv_writer  # same preamble treatment as other CSVs

    with open(os.path.join(outdir, "refinement.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = _csv_writer(fh, h, "refinement study")
        writer.writerow(["n_nodes", "dt", "sup_error"])
        for n, dt, err in study.levels:
            writer.writerow([str(int(n)), format(dt, ".17g"), format(err, ".17g")])
    payload = {
        "format": "bandflow-refinement/1",
        "version": __version__,
        "config": cfg.canonical(),
        "config_hash": h,
        "status": "complete",
        "study": study.to_dict(),
        "observed_order": float(order),
        "passed": bool(order >= 1.9),
    }
    _json_dump(os.path.join(outdir, "manifest.json"), payload)
    if cfg.plots:
        plotdir = os.path.join(outdir, "plots")
        os.makedirs(plotdir, exist_ok=True)
        ns = [lvl[0] for lvl in study.levels]
        errs = [lvl[2] for lvl in study.levels]
        ref_curve = [errs[0] * ((ns[0] - 1) / (n - 1)) ** 2 for n in ns]
        render_line_plot(
            os.path.join(plotdir, "refinement.svg"),
            [
                {"x": ns, "y": errs, "label": "sup error"},
                {"x": ns, "y": ref_curve, "label": "second order reference", "dash": True},
            ],
            title="{}: spatial refinement".format(cfg.name),
            xlabel="nodes",
            ylabel="log10 sup error",
            logy=True,
        )
    log.info("run %s: observed order %.3f", cfg.name, order)
    return {
        "status": "complete",
        "failure": None,
        "checks_passed": bool(order >= 1.9),
        "store": outdir,
        "order": order,
    }


def run_zero_number(cfg, outdir):
    """Seeded suite of crossing pairs checked for count monotonicity."""
    grid = build_grid(cfg)
    bc = build_bc(cfg)
    ctrl = build_controller(cfg)
    suite = cfg.suite
    h = config_hash(cfg)
    os.makedirs(outdir, exist_ok=True)
    log.info(
        "run %s: mode=zero_number pairs=%d crossings=%s t_end=%g",
        cfg.name,
        suite["pairs"],
        suite["crossings"],
        cfg.t_end,
    )
    results = []
    all_passed = True
    for i in range(suite["pairs"]):
        crossings = suite["crossings"][i % len(suite["crossings"])]
        seed = cfg.seed + i
        perturbed, base, expected = crossing_pair(seed, crossings, suite["amplitude"])
        traj_a = advance(
            Problem(grid=grid, bc=bc, initial=perturbed),
            cfg.t_end,
            ctrl,
            snapshot_interval=cfg.snapshot_interval,
        )
        traj_b = advance(
            Problem(grid=grid, bc=bc, initial=base),
            cfg.t_end,
            ctrl,
            snapshot_interval=cfg.snapshot_interval,
        )
        report = verify_nonincreasing_intersections(traj_a, traj_b, suite["tol"])
        counts = report.series["count"]
        flags = report.series["degenerate"]
        initial_matches = counts[0] == expected
        passed = report.passed and initial_matches
        all_passed = all_passed and passed
        results.append(
            {
                "pair": i,
                "seed": seed,
                "expected_initial": expected,
                "initial_count": counts[0],
                "final_count": counts[-1],
                "initial_matches": initial_matches,
                "monotone": report.passed,
                "passed": passed,
                "degenerate_snapshots": int(sum(1 for f in flags if f)),
                "t": report.series["t"],
                "count": counts,
            }
        )
        log.info(
            "pair %d (seed %d): %d -> %d crossings, %s",
            i,
            seed,
            counts[0],
            counts[-1],
            "ok" if passed else "FAILED",
        )
    payload = {
        "format": "bandflow-suite/1",
        "version": __version__,
        "kind": "zero_number",
        "config": cfg.canonical(),
        "config_hash": h,
        "status": "complete",
        "passed": all_passed,
        "pairs": results,
    }
    _json_dump(os.path.join(outdir, "zero_number.json"), payload)
    _json_dump(
        os.path.join(outdir, "manifest.json"),
        {k: v for k, v in payload.items() if k != "pairs"},
    )
    from bandflow.store import _csv_writer

    with open(os.path.join(outdir, "summary.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = _csv_writer(fh, h, "zero number suite")
        writer.writerow(
            ["pair", "seed", "expected_initial", "initial_count", "final_count", "passed"]
        )
        for r in results:
            writer.writerow(
                [
                    str(r["pair"]),
                    str(r["seed"]),
                    str(r["expected_initial"]),
                    str(r["initial_count"]),
                    str(r["final_count"]),
                    str(int(r["passed"])),
                ]
            )
    if cfg.plots:
        plotdir = os.path.join(outdir, "plots")
        os.makedirs(plotdir, exist_ok=True)
        curves = [
            {"x": r["t"], "y": r["count"], "label": "pair {} (start {})".format(r["pair"], r["initial_count"])}
            for r in results[:6]
        ]
        render_line_plot(
            os.path.join(plotdir, "crossing_counts.svg"),
            curves,
            title="{}: intersection counts".format(cfg.name),
            xlabel="t",
            ylabel="sign changes",
        )
    log.info("run %s: %s", cfg.name, "all pairs ok" if all_passed else "SOME PAIRS FAILED")
    return {
        "status": "complete",
        "failure": None,
        "checks_passed": all_passed,
        "store": outdir,
    }


# ---------------------------------------------------------------------------
# resume


def resume_store(store_dir, new_t_end):
    """Continue a stored single run to a later end time, in place.

    The stored config is revalidated and its hash must match the manifest
    (provenance check).  Continuation restores the final state and the
    controller state, so the rewritten store is identical to the one a
    fresh run with the larger t_end would have produced.  Resuming to a
    time at or before the stored end is a no-op.
    """
    manifest = load_manifest(store_dir)
    if "component" in manifest:
        raise StoreError(
            "this store is a component of a composite run; resume is limited to standalone runs"
        )
    cfg = _revalidate(manifest.get("config", {}))
    if config_hash(cfg) != manifest.get("config_hash"):
        raise StoreError("provenance mismatch: stored config does not match its hash")
    new_t_end = float(new_t_end)
    old_end = float(manifest["snapshots"][-1]["t"])
    if new_t_end <= old_end + 1e-12:
        log.info("resume %s: already at t=%g, nothing to do", store_dir, old_end)
        return {"status": "noop", "store": store_dir, "t_reached": old_end}

    _, old_traj = load_trajectory(store_dir)
    old_history = load_dt_history(store_dir)
    problem = build_problem(cfg)
    if problem.grid.n_nodes != old_traj.grid.n_nodes or np.any(
        problem.grid.nodes != old_traj.grid.nodes
    ):
        raise StoreError("stored snapshots do not match the grid built from the stored config")
    ctrl = build_controller(cfg)
    start = old_traj.snapshots[-1]
    controller_state = manifest.get("controller_state", {})
    log.info("resume %s: t=%g -> %g", store_dir, old_end, new_t_end)

    cfg.t_end = new_t_end
    canonical = cfg.canonical()
    h = config_hash(cfg)
    status = "complete"
    failure = None
    try:
        new_traj = advance(
            problem,
            new_t_end,
            ctrl,
            snapshot_interval=cfg.snapshot_interval,
            start=start,
            controller_state=controller_state,
        )
    except StepTooSmall as exc:
        new_traj = exc.trajectory
        status = "partial"
        failure = str(exc)

    merged = Trajectory(
        grid=problem.grid,
        snapshots=list(old_traj.snapshots) + [s.copy() for s in new_traj.snapshots[1:]],
        metadata={
            "steps": old_traj.metadata["steps"] + new_traj.metadata["steps"],
            "newton_iterations": old_traj.metadata["newton_iterations"]
            + new_traj.metadata["newton_iterations"],
            "newton_failures": old_traj.metadata["newton_failures"]
            + new_traj.metadata["newton_failures"],
            "dt_history": list(old_history) + list(new_traj.metadata["dt_history"]),
            "controller_state": new_traj.metadata["controller_state"],
        },
        provenance={"config": canonical, "config_hash": h},
    )
    flags = dict(manifest.get("flags", {}))
    extra = {"t_reached": float(merged.snapshots[-1].t), "t_end": new_t_end}
    if failure is not None:
        extra["failure"] = failure
    write_run_store(store_dir, canonical, h, merged, status=status, flags=flags, extra=extra)
    header, rows = default_series_rows(merged, cfg.diagnostics["shape_halfwidth"])
    write_series(store_dir, rows, header, h)
    reports = trajectory_checks(merged, cfg, problem.bc, problem.initial)
    write_diagnostics(store_dir, reports, h)
    if cfg.plots:
        _plot_trajectory(store_dir, merged, cfg.name)
    log.info("resume %s: %s at t=%g", store_dir, status, merged.snapshots[-1].t)
    return {
        "status": status,
        "failure": failure,
        "checks_passed": all(r.passed for r in reports),
        "store": store_dir,
        "t_reached": float(merged.snapshots[-1].t),
    }


def _revalidate(raw_config):
    from bandflow.config import _validate

    try:
        return _validate(raw_config)
    except Exception as exc:
        raise StoreError("stored config no longer validates: {}".format(exc)) from exc
