"""Closed-form translating profiles for curvature flow of graphs in a band.

The evolution u_t = u_xx / (1 + u_x**2) on [-1, 1] moves a graph by the
vertical projection of its curvature vector.  For every wall slope h > 0 it
admits an exact rigidly translating solution

    phi(x; h) = -(1/c) * log(cos(c * x)),      c = c(h) = arctan(h),

which satisfies phi_x(+-1; h) = +-h and rises with the constant speed c(h).
As h -> infinity the speed c(h) increases to pi/2 and the profile steepens
into the limiting translator with vertical wall asymptotes,

    phi0(x) = -(2/pi) * log(cos(pi * x / 2)),

defined on the open interval (-1, 1) and moving at speed pi/2.  Solutions of
the height-coupled boundary problem u_x(+-1, t) = +-u(+-1, t) approach
phi0 + (pi/2) t + const, so these formulas double as the reference family
for every convergence diagnostic in the package.

Shifted copies of phi(x; h) also act as barriers.  A copy placed below the
solution becomes a valid lower solution once its wall height has risen
enough that the height-coupled boundary inequality holds, and stays valid
afterwards; the same copy is a valid upper solution up to that crossing
time.  `TravelingWave` packages a shifted profile together with those
validity predicates, and `select_upper_barrier_slope` picks a slope whose
wave dominates through a requested horizon.

All functions here are closed-form up to double precision rounding and are
used as oracles by the finite-difference solver tests.
"""

import math

import numpy as np

__all__ = [
    "TravelingWave",
    "grim_reaper_speed",
    "interior_grim_reaper",
    "interior_grim_reaper_slope",
    "make_lower_solution",
    "select_upper_barrier_slope",
    "traveling_wave_boundary_height",
    "traveling_wave_profile",
    "traveling_wave_slope",
    "unit_slope_lower_solution",
]

#: Ascent speed pi/2 of the limiting interior translator.
LIMIT_SPEED = 0.5 * math.pi

#: Half-width of the bracket refinement used by `select_upper_barrier_slope`.
_BARRIER_SLOPE_TOL = 1e-9


def _ln_cos(z):
    """log(cos(z)) evaluated without cancellation for |z| < pi/2.

    Uses log(cos z) = log1p(-2 sin(z/2)**2), which stays accurate as
    cos(z) -> 1 where the direct form loses digits.
    """
    return np.log1p(-2.0 * np.sin(0.5 * z) ** 2)


def grim_reaper_speed(h):
    """Translation speed c(h) = arctan(h) of the wave with wall slope h.

    Parameters
    ----------
    h : float or array_like
        Wall slope, must be positive and finite.

    Returns
    -------
    float or ndarray
        arctan(h), in (0, pi/2).
    """
    ha = np.asarray(h, dtype=float)
    if not np.all(np.isfinite(ha)) or np.any(ha <= 0.0):
        raise ValueError("wall slope h must be positive and finite")
    out = np.arctan(ha)
    return out if out.ndim else float(out)


def traveling_wave_profile(x, h):
    """Wave profile phi(x; h) = -(1/c) log(cos(c x)) with c = arctan(h).

    Defined for |x| <= 1; the cosine argument c|x| <= c < pi/2 keeps the
    logarithm finite all the way to the walls.

    Parameters
    ----------
    x : float or array_like
        Positions in [-1, 1].
    h : float
        Wall slope, positive and finite.

    Returns
    -------
    float or ndarray
        Profile heights, normalized so phi(0; h) = 0.
    """
    c = grim_reaper_speed(h)
    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) > 1.0 + 1e-12):
        raise ValueError("traveling wave profile is only used on [-1, 1]")
    out = -_ln_cos(c * xa) / c
    return out if out.ndim else float(out)


def traveling_wave_slope(x, h):
    """Spatial derivative tan(c x) of phi(x; h), with c = arctan(h)."""
    c = grim_reaper_speed(h)
    xa = np.asarray(x, dtype=float)
    out = np.tan(c * xa)
    return out if out.ndim else float(out)


def traveling_wave_boundary_height(h):
    """Wall height phi(+-1; h) = log(1 + h**2) / (2 arctan h).

    Follows from cos(arctan h) = 1 / sqrt(1 + h**2); the log1p form keeps
    small-h accuracy, where the height behaves like h/2.

    Parameters
    ----------
    h : float or array_like
        Wall slope, positive and finite.
    """
    ha = np.asarray(h, dtype=float)
    c = grim_reaper_speed(ha)
    out = np.log1p(ha * ha) / (2.0 * c)
    return out if out.ndim else float(out)


def interior_grim_reaper(x):
    """Limiting translator phi0(x) = -(2/pi) log(cos(pi x / 2)) on (-1, 1).

    phi0 solves the steady equation phi0'' / (1 + phi0'**2) = pi/2, so
    phi0(x) + (pi/2) t + r is an exact interior solution for every shift r.
    Diverges at the walls; inputs with |x| >= 1 are rejected.
    """
    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) >= 1.0):
        raise ValueError("interior translator diverges at |x| >= 1")
    out = -(2.0 / math.pi) * _ln_cos(0.5 * math.pi * xa)
    return out if out.ndim else float(out)


def interior_grim_reaper_slope(x):
    """Slope phi0'(x) = tan(pi x / 2) of the limiting translator."""
    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) >= 1.0):
        raise ValueError("interior translator diverges at |x| >= 1")
    out = np.tan(0.5 * math.pi * xa)
    return out if out.ndim else float(out)


class TravelingWave:
    """A vertically shifted translating wave with barrier validity tests.

    Represents w(x, t) = phi(x; h) + c(h) * (t - t0) + offset.  The wave is
    an exact interior solution for all t.  Against the height-coupled
    boundary condition u_x(+-1) = +-u(+-1) its wall slope h is fixed while
    its wall height rises, so there is a single crossing time

        t* = t0 + (h - phi(1; h) - offset) / c(h)

    at which the wall height reaches h.  For t >= t* the wave satisfies
    u_x(1) <= u(1) at the walls and is a valid lower solution; for t <= t*
    the reversed inequality holds and it is a valid upper solution.

    Parameters
    ----------
    h : float
        Wall slope of the profile, positive and finite.
    offset : float
        Vertical shift added to the normalized profile at t = t0.
    t0 : float
        Reference time of the shift.
    """

    def __init__(self, h, offset=0.0, t0=0.0):
        self.h = float(h)
        self.c = grim_reaper_speed(self.h)
        self.offset = float(offset)
        self.t0 = float(t0)
        if not math.isfinite(self.offset) or not math.isfinite(self.t0):
            raise ValueError("offset and t0 must be finite")

    def __repr__(self):
        return "TravelingWave(h={!r}, offset={!r}, t0={!r})".format(
            self.h, self.offset, self.t0
        )

    def value(self, x, t):
        """Wave height phi(x; h) + c (t - t0) + offset."""
        return traveling_wave_profile(x, self.h) + self.c * (t - self.t0) + self.offset

    def slope(self, x):
        """Wave slope tan(c x); independent of time."""
        return traveling_wave_slope(x, self.h)

    def boundary_height(self, t):
        """Wall height value(+-1, t), identical at both walls by symmetry."""
        return traveling_wave_boundary_height(self.h) + self.c * (t - self.t0) + self.offset

    def wall_crossing_time(self):
        """Time t* at which the wall height equals the wall slope h."""
        return self.t0 + (self.h - traveling_wave_boundary_height(self.h) - self.offset) / self.c

    def lower_valid_from(self):
        """Earliest time this wave is a lower solution; alias of t*."""
        return self.wall_crossing_time()

    def is_lower_solution_at(self, t):
        """True iff the wave is a valid lower barrier at time t.

        Validity is the wall inequality h <= wall height, i.e. t >= t*.
        Once valid the wave stays valid, since the wall height only rises.
        """
        return t >= self.wall_crossing_time()

    def is_upper_solution_at(self, t):
        """True iff the wave is a valid upper barrier at time t (t <= t*)."""
        return t <= self.wall_crossing_time()


def make_lower_solution(h0, vertical_shift):
    """Wave phi(x; h0) + c(h0) t + vertical_shift as a prospective lower barrier.

    The returned wave reports, through `lower_valid_from`, the first time the
    height-coupled wall inequality h0 <= phi(1; h0) + c(h0) t + vertical_shift
    holds; from then on the wave stays below any solution it started below.

    Parameters
    ----------
    h0 : float
        Wall slope of the barrier profile, positive and finite.
    vertical_shift : float
        Constant added to the profile at t = 0.
    """
    return TravelingWave(h0, offset=float(vertical_shift), t0=0.0)


def unit_slope_lower_solution():
    """The slope-1 wave shifted to become a valid lower solution at t = 0.

    Constructive choice: h0 = 1 with shift 1 - phi(1; 1), so the wall
    inequality holds with equality at t = 0 and strictly afterwards.  The
    wave then ascends at speed c(1) = pi/4, giving the coarse height bound
    u(x, t) >= phi(x; 1) + (pi/4) t + 1 - phi(1; 1) for solutions starting
    above it.  The constants are convenient rather than optimal.
    """
    return make_lower_solution(1.0, 1.0 - traveling_wave_boundary_height(1.0))


def select_upper_barrier_slope(m0, horizon):
    """Smallest convenient slope whose wave dominates through a horizon.

    Finds h such that the wave phi(x; h) + c(h) t + m0 is a valid upper
    solution for the height-coupled boundary condition on all of
    [0, horizon], i.e.

        h > phi(1; h) + (pi/2) * horizon + m0,

    which is stronger than the exact requirement (c(h) < pi/2) and so is
    safe for every t <= horizon.  The left side grows linearly in h while
    phi(1; h) grows only logarithmically, so large h always works.  The
    search doubles h starting from 1 until the inequality holds, then
    bisects the bracket to width 1e-9 and returns the upper end, keeping
    the inequality strict.

    Parameters
    ----------
    m0 : float
        Vertical offset of the barrier at t = 0, typically max of the
        initial data.
    horizon : float
        Length of the time interval to dominate; must be positive.

    Returns
    -------
    float
        A slope h whose wave is a valid upper solution on [0, horizon].
    """
    if not (math.isfinite(m0) and math.isfinite(horizon)) or horizon <= 0.0:
        raise ValueError("horizon must be positive and finite, m0 finite")

    def excess(h):
        return h - traveling_wave_boundary_height(h) - LIMIT_SPEED * horizon - m0

    hi = 1.0
    if excess(hi) <= 0.0:
        while excess(hi) <= 0.0:
            hi *= 2.0
            if hi > 1e306:
                raise ValueError("barrier slope search failed to bracket")
        lo = hi / 2.0
    else:
        # Holds already at the first rung.  As h -> 0 the excess tends to
        # -(pi/2) * horizon - m0; if that is nonnegative the inequality holds
        # for every h and the first rung is returned.
        if LIMIT_SPEED * horizon + m0 <= 0.0:
            return hi
        lo = 0.0
    while hi - lo > _BARRIER_SLOPE_TOL:
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return hi
