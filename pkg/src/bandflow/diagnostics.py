"""Runtime diagnostics mirroring the comparison arguments behind convergence.

The long-time behavior of the height-coupled flow rests on a small set of
monotone quantities: the number of sign changes of a difference of two
solutions never increases, ordered data stay ordered, translating waves
below (above) the solution stay below (above), and interior slopes stay
inside the envelope spanned by a traveling wave and the limiting
translator.  Each check here turns one of those statements into a
quantitative pass/fail report on computed trajectories, with the worst
margin and a per-snapshot series retained for artifacts.

Counting conventions: a node value within a degeneracy tolerance of zero is
excluded from sign-change counting and the snapshot is flagged degenerate;
monotonicity of counts is asserted over the unflagged snapshots only.  The
default tolerance is 1e-9 * (1 + max |values|).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from bandflow.closed_forms import (
    LIMIT_SPEED,
    interior_grim_reaper,
    interior_grim_reaper_slope,
    traveling_wave_profile,
    traveling_wave_slope,
    unit_slope_lower_solution,
)
from bandflow.solver import discrete_gradient

__all__ = [
    "BoundsReport",
    "CheckReport",
    "EnvelopeReport",
    "MinGradientReport",
    "ZeroCount",
    "default_degeneracy_tol",
    "gradient_envelope_check",
    "gradient_zero_curves",
    "interior_min_gradient_check",
    "intersection_count",
    "lower_height_bound_check",
    "lower_height_bound_margin",
    "shape_error",
    "sign_change_count",
    "verify_nonincreasing_intersections",
    "verify_ordering",
    "verify_reaper_family_trichotomy",
    "wave_speed_estimate",
]


@dataclass
class ZeroCount:
    """Sign changes of a sampled function plus degeneracy bookkeeping."""

    count: int
    degenerate_indices: list

    @property
    def degenerate(self):
        return len(self.degenerate_indices) > 0


@dataclass
class CheckReport:
    """Uniform result record for trajectory-level checks.

    series maps column names to equal-length lists, one entry per snapshot.
    worst_margin is oriented so that nonnegative means the check passed
    with that much slack.
    """

    name: str
    parameters: dict
    passed: bool
    worst_margin: float
    series: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "parameters": _plain(self.parameters),
            "passed": bool(self.passed),
            "worst_margin": float(self.worst_margin),
            "series": _plain(self.series),
        }


def _plain(obj):
    """Recursively convert numpy scalars/arrays for JSON serialization."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def default_degeneracy_tol(values):
    """Degeneracy tolerance 1e-9 * (1 + max |values|)."""
    values = np.asarray(values, dtype=float)
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    return 1e-9 * (1.0 + scale)


def sign_change_count(values, tol):
    """Count sign changes along a sampled function, skipping near-zeros.

    Entries with |value| < tol are excluded from the sign sequence and
    reported as degenerate indices; the count is the number of strict sign
    alternations among the remaining entries.  tol must be positive.
    """
    if not (isinstance(tol, (int, float)) and math.isfinite(float(tol)) and tol > 0.0):
        raise ValueError("degeneracy tolerance must be positive")
    values = np.asarray(values, dtype=float)
    if values.ndim != 1:
        raise ValueError("values must be a 1-d sequence")
    keep = np.abs(values) >= tol
    kept = values[keep]
    signs = np.sign(kept)
    count = int(np.count_nonzero(np.diff(signs))) if kept.size > 1 else 0
    degenerate = np.nonzero(~keep)[0].tolist()
    return ZeroCount(count=count, degenerate_indices=degenerate)


def intersection_count(state_a, state_b, tol=None):
    """Sign changes of state_a - state_b on the shared grid.

    Both states must live on grids of equal length and carry matching times
    (within 1e-12); tol defaults to the scale-aware degeneracy tolerance of
    the difference.
    """
    ua = np.asarray(state_a.u, dtype=float)
    ub = np.asarray(state_b.u, dtype=float)
    if ua.shape != ub.shape:
        raise ValueError("states live on different grids")
    if abs(state_a.t - state_b.t) > 1e-12:
        raise ValueError(
            "states are not simultaneous: t={!r} vs t={!r}".format(state_a.t, state_b.t)
        )
    diff = ua - ub
    if tol is None:
        tol = default_degeneracy_tol(diff)
    return sign_change_count(diff, tol)


def _aligned_snapshots(traj_a, traj_b):
    if traj_a.grid.n_nodes != traj_b.grid.n_nodes or np.any(
        traj_a.grid.nodes != traj_b.grid.nodes
    ):
        raise ValueError("trajectories use different grids")
    if len(traj_a.snapshots) != len(traj_b.snapshots):
        raise ValueError("trajectories hold different snapshot counts")
    for sa, sb in zip(traj_a.snapshots, traj_b.snapshots):
        if abs(sa.t - sb.t) > 1e-9:
            raise ValueError("snapshot times differ: {!r} vs {!r}".format(sa.t, sb.t))
    return list(zip(traj_a.snapshots, traj_b.snapshots))


def verify_nonincreasing_intersections(traj_a, traj_b, tol=None):
    """Check that the intersection count of two runs never increases.

    Counts are computed per snapshot; snapshots with degenerate (near-zero)
    difference entries are flagged and excluded from the monotonicity
    assertion.  worst_margin is the negated largest increase between
    consecutive unflagged snapshots, so 0 or more passes.
    """
    pairs = _aligned_snapshots(traj_a, traj_b)
    times, counts, flags = [], [], []
    for sa, sb in pairs:
        zc = intersection_count(sa, sb, tol)
        times.append(sa.t)
        counts.append(zc.count)
        flags.append(zc.degenerate)
    clean = [c for c, f in zip(counts, flags) if not f]
    worst_increase = 0
    for prev, cur in zip(clean, clean[1:]):
        worst_increase = max(worst_increase, cur - prev)
    return CheckReport(
        name="nonincreasing_intersections",
        parameters={"tol": tol if tol is not None else "auto"},
        passed=worst_increase <= 0,
        worst_margin=float(-worst_increase),
        series={"t": times, "count": counts, "degenerate": flags},
    )


def verify_ordering(traj_lower, traj_upper, tol=1e-10):
    """Check that an initially ordered pair stays ordered at every snapshot.

    Requires the pair to be ordered at the first snapshot (up to tol);
    otherwise the input is rejected as violating the comparison hypothesis.
    worst_margin is tol minus the worst overshoot max(lower - upper).
    """
    if tol < 0.0:
        raise ValueError("tol must be nonnegative")
    pairs = _aligned_snapshots(traj_lower, traj_upper)
    first_gap = float(np.max(pairs[0][0].u - pairs[0][1].u))
    if first_gap > tol:
        raise ValueError(
            "pair is not ordered initially: max(lower - upper) = {:.3e}".format(first_gap)
        )
    times, violations = [], []
    for sa, sb in pairs:
        times.append(sa.t)
        violations.append(float(np.max(sa.u - sb.u)))
    worst = max(violations)
    return CheckReport(
        name="ordering",
        parameters={"tol": tol},
        passed=worst <= tol,
        worst_margin=float(tol - worst),
        series={"t": times, "violation": violations},
    )


def _center_height(state, grid):
    return float(np.interp(0.0, grid.nodes, state.u))


def wave_speed_estimate(traj, window):
    """Least squares ascent speed of u(0, t) over a time window.

    window = (t1, t2) selects snapshots with t1 <= t <= t2 (1e-12 slack);
    at least three are required.  Returns the fitted slope.
    """
    t1, t2 = float(window[0]), float(window[1])
    if not (t2 > t1):
        raise ValueError("window must satisfy t1 < t2")
    ts, ys = [], []
    for s in traj.snapshots:
        if t1 - 1e-12 <= s.t <= t2 + 1e-12:
            ts.append(s.t)
            ys.append(_center_height(s, traj.grid))
    if len(ts) < 3:
        raise ValueError("need at least three snapshots in the window")
    ts = np.asarray(ts)
    ys = np.asarray(ys)
    tbar = ts - ts.mean()
    return float(np.dot(tbar, ys - ys.mean()) / np.dot(tbar, tbar))


def shape_error(state, grid, halfwidth):
    """Sup distance to the recentered limiting translator on |x| <= halfwidth.

    Compares u(x, t) - u(0, t) against the translator profile; u(0, t) is
    interpolated linearly if 0 is not a node (it always is for the package
    grids).  halfwidth must lie in (0, 1).
    """
    a = float(halfwidth)
    if not (0.0 < a < 1.0):
        raise ValueError("halfwidth must lie in (0, 1)")
    x = grid.nodes
    mask = np.abs(x) <= a + 1e-12
    center = _center_height(state, grid)
    ref = interior_grim_reaper(x[mask])
    return float(np.max(np.abs(state.u[mask] - center - ref)))


@dataclass
class EnvelopeReport:
    """Result of the interior slope envelope check."""

    region: tuple
    tol: float
    lower_ok: bool
    upper_ok: bool
    worst_margin: float

    @property
    def passed(self):
        return self.lower_ok and self.upper_ok


def gradient_envelope_check(state, grid, h0, region=(0.1, 0.8), tol=1e-2):
    """Check traveling-wave and translator slope envelopes on a band.

    On region = (r_in, r_out) with 0 < r_in < r_out < 1, the outward slope
    sign(x) * u_x must stay above the traveling-wave slope tan(c(h0) |x|)
    and below the translator slope tan(pi |x| / 2), both up to tol.  The
    walls are excluded automatically since r_out < 1.
    """
    r_in, r_out = float(region[0]), float(region[1])
    if not (0.0 < r_in < r_out < 1.0):
        raise ValueError("region must satisfy 0 < inner < outer < 1")
    x = grid.nodes
    d = discrete_gradient(state.u, grid)
    mask = (np.abs(x) >= r_in - 1e-12) & (np.abs(x) <= r_out + 1e-12)
    if not np.any(mask):
        raise ValueError("region contains no grid nodes")
    outward = np.sign(x[mask]) * d[mask]
    ax = np.abs(x[mask])
    lower = traveling_wave_slope(ax, h0)
    upper = interior_grim_reaper_slope(ax)
    lower_margin = float(np.min(outward - lower))
    upper_margin = float(np.min(upper - outward))
    return EnvelopeReport(
        region=(r_in, r_out),
        tol=float(tol),
        lower_ok=lower_margin >= -tol,
        upper_ok=upper_margin >= -tol,
        worst_margin=min(lower_margin, upper_margin),
    )


@dataclass
class MinGradientReport:
    """Result of the side-band minimum gradient bound."""

    m1: float
    min_left: float
    min_right: float
    left_ok: bool
    right_ok: bool

    @property
    def passed(self):
        return self.left_ok and self.right_ok


def interior_min_gradient_check(state, grid, eps, t_shift):
    """Strict bound min |u_x| < M1 on both side bands of width eps.

    M1 = (phi0(1 - eps) + (pi/2) * t_shift) / eps dominates the average
    slope that would be needed to climb the translator height across the
    band [1 - 2 eps, 1 - eps] (and its mirror image) by time t_shift, so
    the minimum absolute slope over each band must stay strictly below it.
    """
    e = float(eps)
    if not (0.0 < e < 0.5):
        raise ValueError("eps must lie in (0, 1/2)")
    m1 = (interior_grim_reaper(1.0 - e) + LIMIT_SPEED * float(t_shift)) / e
    x = grid.nodes
    d = np.abs(discrete_gradient(state.u, grid))
    right = (x >= 1.0 - 2.0 * e - 1e-12) & (x <= 1.0 - e + 1e-12)
    left = (x >= -1.0 + e - 1e-12) & (x <= -1.0 + 2.0 * e + 1e-12)
    if not (np.any(left) and np.any(right)):
        raise ValueError("side bands contain no grid nodes")
    min_left = float(np.min(d[left]))
    min_right = float(np.min(d[right]))
    return MinGradientReport(
        m1=float(m1),
        min_left=min_left,
        min_right=min_right,
        left_ok=min_left < m1,
        right_ok=min_right < m1,
    )


@dataclass
class BoundsReport:
    """Combined lower height bound and gradient constants for one state."""

    lower_bound_ok: bool
    lower_bound_margin: float
    m1: float
    m2: float
    min_gradient_ok: bool


def lower_height_bound_margin(state, grid):
    """Margin of u over the unit-slope lower wave, min over the grid.

    The reference is phi(x; 1) + (pi/4) t + 1 - phi(1; 1), valid below any
    solution with u0 >= 1 once its own wall inequality holds (t >= 0 by
    construction of the shift).
    """
    wave = unit_slope_lower_solution()
    bound = wave.value(grid.nodes, state.t)
    return float(np.min(state.u - bound))


def lower_height_bound_check(state, grid, tol=1e-8):
    """True when u stays above the unit-slope lower wave up to tol."""
    return lower_height_bound_margin(state, grid) >= -float(tol)


def bounds_report(state, grid, eps, t_shift, tol=1e-8):
    """Bundle the lower height bound with the side-band gradient check.

    m2 records max(M1, sup of |u_x| over the eps-interior), the constant a
    gradient-envelope argument would propagate forward from this state.
    """
    margin = lower_height_bound_margin(state, grid)
    mg = interior_min_gradient_check(state, grid, eps, t_shift)
    x = grid.nodes
    inner = np.abs(x) <= 1.0 - float(eps) + 1e-12
    sup_grad = float(np.max(np.abs(discrete_gradient(state.u, grid))[inner]))
    return BoundsReport(
        lower_bound_ok=margin >= -float(tol),
        lower_bound_margin=margin,
        m1=mg.m1,
        m2=max(mg.m1, sup_grad),
        min_gradient_ok=mg.passed,
    )


def verify_reaper_family_trichotomy(traj, offset, tol=None):
    """Zero counts of u - (phi0 + offset + (pi/2) t) over interior nodes.

    Members of the translator family are exact solutions, so against any
    flow solution the count of interior crossings can only be 0 or 2 once
    the family member starts below the initial data at the center and above
    it at the walls (the wall values of the family are +infinity, so wall
    nodes are excluded).  Snapshots with degenerate entries are flagged and
    skipped by the pass criterion.
    """
    x = traj.grid.nodes[1:-1]
    ref0 = interior_grim_reaper(x)
    times, counts, flags = [], [], []
    for s in traj.snapshots:
        diff = s.u[1:-1] - (ref0 + float(offset) + LIMIT_SPEED * s.t)
        zc = sign_change_count(diff, tol if tol is not None else default_degeneracy_tol(diff))
        times.append(s.t)
        counts.append(zc.count)
        flags.append(zc.degenerate)
    clean = [c for c, f in zip(counts, flags) if not f]
    ok = all(c in (0, 2) for c in clean)
    worst = 0 if ok else max(abs(c - 2) for c in clean if c not in (0, 2))
    return CheckReport(
        name="reaper_family_trichotomy",
        parameters={"offset": float(offset)},
        passed=ok,
        worst_margin=float(-worst),
        series={"t": times, "count": counts, "degenerate": flags},
    )


def gradient_zero_curves(traj, eps, t_shift):
    """Outermost crossings of |u_x| = M1 per snapshot, with containment.

    For each snapshot the rightmost node interval where |u_x| - M1 changes
    sign is located (and symmetrically the leftmost); the crossing abscissa
    rho_plus (rho_minus) is recorded, NaN if the level M1 is not reached.
    Containment rho_plus >= 1 - 2 eps and rho_minus <= -1 + 2 eps is
    asserted only for snapshots where the crossing exists.
    """
    e = float(eps)
    m1 = (interior_grim_reaper(1.0 - e) + LIMIT_SPEED * float(t_shift)) / e
    x = traj.grid.nodes
    times = []
    rho_plus, rho_minus, contained = [], [], []
    for s in traj.snapshots:
        d = np.abs(discrete_gradient(s.u, traj.grid)) - m1
        signs = np.sign(d)
        flips = np.nonzero(signs[1:] * signs[:-1] < 0.0)[0]
        times.append(s.t)
        if flips.size == 0:
            rho_plus.append(math.nan)
            rho_minus.append(math.nan)
            contained.append(True)
            continue
        rp = float(x[flips[-1] + 1])
        rm = float(x[flips[0]])
        rho_plus.append(rp)
        rho_minus.append(rm)
        contained.append(rp >= 1.0 - 2.0 * e and rm <= -1.0 + 2.0 * e)
    return CheckReport(
        name="gradient_zero_curves",
        parameters={"eps": e, "t_shift": float(t_shift), "m1": float(m1)},
        passed=all(contained),
        worst_margin=0.0 if all(contained) else -1.0,
        series={"t": times, "rho_plus": rho_plus, "rho_minus": rho_minus, "contained": contained},
    )
