"""Trajectory stores: deterministic on-disk artifacts for runs.

A single-run store is a directory:

    manifest.json            run description, snapshot index, solver stats
    series.csv               per-snapshot scalar diagnostics
    dt_history.csv           accepted steps (t, dt, newton iterations)
    diagnostics.json         check reports (when diagnostics ran)
    snapshots/snap_NNNNNN.csv  node values per snapshot
    plots/*.svg              optional rendered figures

Numbers are written with repr-faithful formatting ('%.17g' in CSV, repr in
JSON), so reading a store back reproduces the exact doubles and rerunning a
config yields byte-identical files.  Wall-clock timings never enter the
store.  CSV files carry a short '#' comment preamble with the format tag
and config hash before the header row.
"""

import csv
import json
import os

import numpy as np

from bandflow._version import __version__
from bandflow.solver import Grid, State, Trajectory, discrete_gradient

__all__ = [
    "StoreError",
    "load_dt_history",
    "load_manifest",
    "load_snapshot",
    "load_trajectory",
    "write_diagnostics",
    "write_manifest",
    "write_run_store",
    "write_series",
]

FORMAT_TAG = "bandflow-run/1"


class StoreError(RuntimeError):
    """A trajectory store is missing pieces or inconsistent."""


def _fmt(x):
    return format(float(x), ".17g")


def _json_dump(path, payload):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _csv_writer(fh, config_hash, comment):
    fh.write("# {} {}\r\n".format(FORMAT_TAG, comment))
    fh.write("# version: {}\r\n".format(__version__))
    fh.write("# config_hash: {}\r\n".format(config_hash))
    return csv.writer(fh)


def snapshot_filename(index):
    return "snapshots/snap_{:06d}.csv".format(index)


def write_snapshot(outdir, index, state, grid, config_hash):
    path = os.path.join(outdir, snapshot_filename(index))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _csv_writer(fh, config_hash, "snapshot t={}".format(_fmt(state.t)))
        writer.writerow(["x", "u"])
        for x, u in zip(grid.nodes, state.u):
            writer.writerow([_fmt(x), _fmt(u)])
    return snapshot_filename(index)


def write_series(outdir, rows, header, config_hash):
    path = os.path.join(outdir, "series.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _csv_writer(fh, config_hash, "series")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, float) else str(v) for v in row])


def write_dt_history(outdir, metadata, config_hash):
    path = os.path.join(outdir, "dt_history.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _csv_writer(fh, config_hash, "accepted steps")
        writer.writerow(["t", "dt", "newton_iterations"])
        for t, dt, iters in metadata.get("dt_history", []):
            writer.writerow([_fmt(t), _fmt(dt), str(int(iters))])


def write_diagnostics(outdir, reports, config_hash):
    payload = {
        "format": FORMAT_TAG,
        "version": __version__,
        "config_hash": config_hash,
        "checks": [r.to_dict() for r in reports],
        "passed": all(r.passed for r in reports) if reports else True,
    }
    _json_dump(os.path.join(outdir, "diagnostics.json"), payload)


def write_manifest(outdir, payload):
    _json_dump(os.path.join(outdir, "manifest.json"), payload)


def write_run_store(outdir, cfg_canonical, cfg_hash, traj, status="complete", flags=None, extra=None):
    """Write a full single-run store; returns the manifest payload."""
    snapdir = os.path.join(outdir, "snapshots")
    os.makedirs(snapdir, exist_ok=True)
    snaps = []
    for i, state in enumerate(traj.snapshots):
        fname = write_snapshot(outdir, i, state, traj.grid, cfg_hash)
        snaps.append({"index": i, "t": float(state.t), "file": fname})
    # drop snapshots a previous, longer write left behind
    keep = {os.path.basename(entry["file"]) for entry in snaps}
    for name in os.listdir(snapdir):
        if name.startswith("snap_") and name.endswith(".csv") and name not in keep:
            os.unlink(os.path.join(snapdir, name))
    write_dt_history(outdir, traj.metadata, cfg_hash)
    manifest = {
        "format": FORMAT_TAG,
        "version": __version__,
        "config": cfg_canonical,
        "config_hash": cfg_hash,
        "status": status,
        "grid": {
            "nodes": int(traj.grid.n_nodes),
            "beta": float(traj.grid.beta),
            "kind": traj.grid.kind,
        },
        "flags": dict(flags or {}),
        "snapshots": snaps,
        "stats": {
            "steps": int(traj.metadata.get("steps", 0)),
            "newton_iterations": int(traj.metadata.get("newton_iterations", 0)),
            "newton_failures": int(traj.metadata.get("newton_failures", 0)),
        },
        "controller_state": {
            "dt": float(traj.metadata.get("controller_state", {}).get("dt", 0.0)),
            "streak": int(traj.metadata.get("controller_state", {}).get("streak", 0)),
        },
    }
    if extra:
        manifest.update(extra)
    write_manifest(outdir, manifest)
    return manifest


def default_series_rows(traj, shape_halfwidth=0.8):
    """Standard per-snapshot scalar series for a trajectory.

    Columns: t, center and wall heights, discrete wall slopes, and the
    recentered sup distance to the limiting translator over
    |x| <= shape_halfwidth.
    """
    from bandflow.diagnostics import default_degeneracy_tol, shape_error, sign_change_count

    header = [
        "t",
        "u_center",
        "u_left",
        "u_right",
        "slope_left",
        "slope_right",
        "shape_error",
        "slope_zero_count",
    ]
    rows = []
    for s in traj.snapshots:
        d = discrete_gradient(s.u, traj.grid)
        zc = sign_change_count(d, default_degeneracy_tol(d))
        rows.append(
            [
                float(s.t),
                float(np.interp(0.0, traj.grid.nodes, s.u)),
                float(s.u[0]),
                float(s.u[-1]),
                float(d[0]),
                float(d[-1]),
                shape_error(s, traj.grid, shape_halfwidth),
                zc.count,
            ]
        )
    return header, rows


# ---------------------------------------------------------------------------
# reading


def load_manifest(store_dir):
    path = os.path.join(store_dir, "manifest.json")
    if not os.path.isfile(path):
        raise StoreError("{} is not a trajectory store (no manifest.json)".format(store_dir))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise StoreError("corrupted manifest.json: {}".format(exc)) from exc
    if manifest.get("format") != FORMAT_TAG:
        raise StoreError("unsupported store format {!r}".format(manifest.get("format")))
    return manifest


def _read_csv_rows(path):
    if not os.path.isfile(path):
        raise StoreError("missing store file {}".format(path))
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(line for line in fh if not line.startswith("#"))]
    if not rows:
        raise StoreError("empty store file {}".format(path))
    return rows


def load_dt_history(store_dir):
    """Accepted-step rows (t, dt, iterations) from a store, oldest first."""
    rows = _read_csv_rows(os.path.join(store_dir, "dt_history.csv"))
    if rows[0] != ["t", "dt", "newton_iterations"]:
        raise StoreError("unexpected dt_history header")
    return [(float(t), float(dt), int(it)) for t, dt, it in rows[1:]]


def load_snapshot(store_dir, entry):
    rows = _read_csv_rows(os.path.join(store_dir, entry["file"]))
    if rows[0] != ["x", "u"]:
        raise StoreError("unexpected snapshot header in {}".format(entry["file"]))
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    return data[:, 0], State(float(entry["t"]), data[:, 1])


def load_trajectory(store_dir):
    """Rebuild (manifest, Trajectory) from a single-run store."""
    manifest = load_manifest(store_dir)
    entries = manifest.get("snapshots", [])
    if not entries:
        raise StoreError("store holds no snapshots")
    states = []
    nodes = None
    for entry in entries:
        x, state = load_snapshot(store_dir, entry)
        if nodes is None:
            nodes = x
        elif x.shape != nodes.shape or np.any(x != nodes):
            raise StoreError("snapshot grids disagree inside the store")
        states.append(state)
    gspec = manifest.get("grid", {})
    grid = Grid(nodes=nodes, kind=gspec.get("kind", "uniform"), beta=float(gspec.get("beta", 1.0)))
    metadata = {
        "steps": manifest.get("stats", {}).get("steps", 0),
        "newton_iterations": manifest.get("stats", {}).get("newton_iterations", 0),
        "newton_failures": manifest.get("stats", {}).get("newton_failures", 0),
        "dt_history": [],
        "controller_state": dict(manifest.get("controller_state", {})),
    }
    return manifest, Trajectory(grid=grid, snapshots=states, metadata=metadata, provenance={"config": manifest.get("config", {})})
