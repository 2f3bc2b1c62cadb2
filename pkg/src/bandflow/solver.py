"""Implicit finite-difference solver for u_t = u_xx / (1 + u_x**2) on [-1, 1].

Space is discretized on a symmetric, optionally wall-graded node set with
three-point second-order stencils: central differences (nonuniform form) at
interior nodes and one-sided three-point closures for the slope boundary
conditions at the walls.  Time stepping is backward Euler solved by a damped
Newton iteration on the full nonlinear system per step; the Jacobian is
banded (two sub- and two superdiagonals, the outer ones only from the wall
closure rows) and is factorized directly.

Step size is adaptive: a step whose Newton iteration fails to converge is
retried with half the step, and after three consecutive cheap solves the
step grows by 1.2x up to the controller cap.  Trajectories record states at
exact multiples of the snapshot interval; the controller clips a step to
land on the next snapshot time, which keeps resumed runs bitwise identical
to uninterrupted ones.

The boundary families all prescribe the wall slope through the outward
one-sided derivative:

    NonlinearRobin      u_x(-1) = -u(-1),          u_x(1) = u(1)
    ConstantNeumann(h)  u_x(-1) = -h,              u_x(1) = h
    AffineRobin         u_x(-1) = a_m u(-1) + b_m, u_x(1) = a_p u(1) + b_p

NonlinearRobin is the height-coupled condition whose solutions ascend like
the limiting interior translator; ConstantNeumann has exact traveling-wave
solutions used as solver oracles; AffineRobin covers linear wall couplings,
including the sign-split regime a_m < 0 < a_p for which no convergence
theory is available (runs are flagged accordingly in metadata).
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

__all__ = [
    "AffineRobin",
    "BoundaryCondition",
    "ConstantNeumann",
    "Grid",
    "NewtonDiverged",
    "NonlinearRobin",
    "Problem",
    "State",
    "StepController",
    "StepTooSmall",
    "Trajectory",
    "advance",
    "apply_boundary_closure",
    "discrete_gradient",
    "initial_state",
    "make_graded_grid",
    "newton_system",
    "semidiscrete_residual",
    "step_implicit",
    "theta_field",
]

_EPS = np.finfo(float).eps

# Safety factor multiplying the per-row roundoff allowance added to the
# Newton tolerance; see _roundoff_allowance for the estimate it scales.
_ROUNDOFF_SAFETY = 16.0


class NewtonDiverged(RuntimeError):
    """Newton iteration for one implicit step failed to converge."""


class StepTooSmall(RuntimeError):
    """Adaptive step fell below the controller minimum.

    Carries the partial trajectory computed so far in the ``trajectory``
    attribute when raised by `advance`.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class Grid:
    """Node set for the band [-1, 1].

    nodes are strictly increasing with nodes[0] = -1, nodes[-1] = 1, and are
    exactly antisymmetric (nodes[j] == -nodes[-1-j]), so x = 0 is always a
    node.  kind is "uniform" or "graded"; beta records the grading exponent.
    """

    nodes: np.ndarray
    kind: str = "uniform"
    beta: float = 1.0

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_intervals(self):
        return self.nodes.shape[0] - 1

    def spacing(self):
        """Cell widths, length n_intervals."""
        return np.diff(self.nodes)


def make_graded_grid(n, beta=1.0):
    """Symmetric grid with n intervals, graded toward the walls.

    Maps the uniform nodes s_j = -1 + 2j/n through

        x(s) = sign(s) * (1 - (1 - |s|)**beta),

    so beta = 1 gives the uniform grid and beta > 1 compresses cells near
    the walls (wall cell width ~ (2/n)**beta) while fixing x(0) = 0 and
    x(+-1) = +-1.  After mapping, the nodes are exactly antisymmetrized so
    reflection symmetry of the discretization holds to the bit.

    Parameters
    ----------
    n : int
        Number of intervals; even and at least 4 so that 0 is a node and
        the three-point wall closures do not overlap.
    beta : float
        Grading exponent, >= 1.
    """
    if not isinstance(n, (int, np.integer)):
        raise ValueError("n must be an integer")
    n = int(n)
    if n < 4 or n % 2 != 0:
        raise ValueError("n must be an even integer >= 4")
    beta = float(beta)
    if not math.isfinite(beta) or beta < 1.0:
        raise ValueError("grading exponent beta must be >= 1")
    s = np.linspace(-1.0, 1.0, n + 1)
    x = np.sign(s) * (1.0 - (1.0 - np.abs(s)) ** beta)
    x = 0.5 * (x - x[::-1])  # enforce exact antisymmetry
    x[0] = -1.0
    x[-1] = 1.0
    x[n // 2] = 0.0
    if np.any(np.diff(x) <= 0.0):
        raise ValueError("graded nodes are not strictly increasing")
    return Grid(nodes=x, kind="uniform" if beta == 1.0 else "graded", beta=beta)


# ---------------------------------------------------------------------------
# boundary conditions


class BoundaryCondition:
    """Base for wall slope closures u_x(wall) = g(u(wall)).

    Subclasses define g and dg/du at each wall through `target`.  The
    discrete closure residual at a wall is the one-sided three-point
    derivative minus the target slope.
    """

    family = "base"
    #: True when the family sits outside the available convergence theory.
    outside_convergence_theory = False

    def target(self, side, value):
        """Target slope g(value) and derivative dg/dvalue at a wall.

        side is -1 for the left wall, +1 for the right.
        """
        raise NotImplementedError

    def params(self):
        """Family parameters as a plain dict (for provenance records)."""
        return {}

    def describe(self):
        d = {"family": self.family}
        d.update(self.params())
        return d

    def __repr__(self):
        items = ", ".join("{}={!r}".format(k, v) for k, v in self.params().items())
        return "{}({})".format(type(self).__name__, items)


class NonlinearRobin(BoundaryCondition):
    """Height-coupled walls u_x(+-1) = +-u(+-1)."""

    family = "nonlinear_robin"

    def target(self, side, value):
        return side * value, float(side)


class ConstantNeumann(BoundaryCondition):
    """Fixed wall slopes u_x(+-1) = +-h with h > 0."""

    family = "constant_neumann"

    def __init__(self, h):
        self.h = float(h)
        if not math.isfinite(self.h) or self.h <= 0.0:
            raise ValueError("Neumann slope h must be positive and finite")

    def target(self, side, value):
        return side * self.h, 0.0

    def params(self):
        return {"h": self.h}


class AffineRobin(BoundaryCondition):
    """Affine wall couplings u_x(+-1) = alpha_pm * u(+-1) + beta_pm.

    The sign-split regime alpha_minus < 0 < alpha_plus admits no
    convergence theory; such problems integrate normally but runs carry an
    outside-theory flag in their metadata.
    """

    family = "affine_robin"

    def __init__(self, alpha_minus, alpha_plus, beta_minus, beta_plus):
        vals = [float(alpha_minus), float(alpha_plus), float(beta_minus), float(beta_plus)]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("affine boundary coefficients must be finite")
        self.alpha_minus, self.alpha_plus, self.beta_minus, self.beta_plus = vals

    @property
    def outside_convergence_theory(self):
        return self.alpha_minus < 0.0 < self.alpha_plus

    def target(self, side, value):
        if side < 0:
            return self.alpha_minus * value + self.beta_minus, self.alpha_minus
        return self.alpha_plus * value + self.beta_plus, self.alpha_plus

    def params(self):
        return {
            "alpha_minus": self.alpha_minus,
            "alpha_plus": self.alpha_plus,
            "beta_minus": self.beta_minus,
            "beta_plus": self.beta_plus,
        }


# ---------------------------------------------------------------------------
# state / problem / controller / trajectory


@dataclass
class State:
    """Solution values on the grid nodes at one time."""

    t: float
    u: np.ndarray

    def copy(self):
        return State(self.t, self.u.copy())


@dataclass
class Problem:
    """Grid, boundary family, and initial data bundled for integration.

    The initial data must satisfy the wall closures analytically: if it
    exposes a slope() method, compatibility |u0'(+-1) - g(u0(+-1))| <= 1e-8
    is enforced at construction.
    """

    grid: Grid
    bc: BoundaryCondition
    initial: object

    def __post_init__(self):
        if self.grid.n_nodes < 5:
            raise ValueError("grid too coarse for the wall closures")
        if getattr(self.initial, "has_slope", True) and hasattr(self.initial, "slope"):
            for side, xw in ((-1, -1.0), (1, 1.0)):
                val = float(self.initial.value(xw))
                slope = float(self.initial.slope(xw))
                target, _ = self.bc.target(side, val)
                if abs(slope - target) > 1e-8:
                    raise ValueError(
                        "initial data violates the wall closure at x={:+.0f}: "
                        "slope {:.3e} vs target {:.3e}".format(xw, slope, target)
                    )


@dataclass
class StepController:
    """Adaptive backward Euler step policy and Newton settings.

    A step halves (shrink) when Newton fails and grows by `growth` after
    `fast_streak` consecutive solves that converged in at most `fast_iters`
    iterations.  Steps clipped to land on snapshot times do not count as
    failures; `dt_min` only gates failure-driven shrinking.
    """

    dt_init: float = 1e-3
    dt_min: float = 1e-9
    dt_max: float = 5e-2
    newton_tol: float = 1e-10
    newton_max_iters: int = 25
    growth: float = 1.2
    shrink: float = 0.5
    fast_iters: int = 4
    fast_streak: int = 3

    def __post_init__(self):
        if not (0.0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")
        if self.newton_tol <= 0.0 or self.newton_max_iters < 1:
            raise ValueError("Newton settings must be positive")
        if not (self.growth > 1.0 and 0.0 < self.shrink < 1.0):
            raise ValueError("growth must exceed 1 and shrink lie in (0, 1)")


@dataclass
class Trajectory:
    """Snapshots of one run plus provenance and solver statistics.

    snapshots hold states at t = 0 (or the resume start) and every multiple
    of the snapshot interval up to t_end, t_end included.  metadata records
    step counts, Newton iteration totals, failure counts, the dt history,
    and the controller state needed to resume deterministically.
    """

    grid: Grid
    snapshots: list
    metadata: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def times(self):
        return np.array([s.t for s in self.snapshots])

    def values(self):
        return np.stack([s.u for s in self.snapshots])

    def state_at(self, t):
        """Snapshot whose time matches t within 1e-9."""
        for s in self.snapshots:
            if abs(s.t - t) <= 1e-9:
                return s
        raise KeyError("no snapshot at t={!r}".format(t))

    @property
    def final(self):
        return self.snapshots[-1]


def initial_state(problem):
    """Sample the problem's initial data on the grid at t = 0."""
    u0 = np.asarray(problem.initial.value(problem.grid.nodes), dtype=float)
    if u0.shape != problem.grid.nodes.shape or not np.all(np.isfinite(u0)):
        raise ValueError("initial data must produce finite values on the grid")
    return State(0.0, u0.copy())


# ---------------------------------------------------------------------------
# discretization


def _one_sided_weights(x0, x1, x2):
    """Weights of d/dx at x0 for the quadratic through (x0, x1, x2)."""
    w0 = (2.0 * x0 - x1 - x2) / ((x0 - x1) * (x0 - x2))
    w1 = (x0 - x2) / ((x1 - x0) * (x1 - x2))
    w2 = (x0 - x1) / ((x2 - x0) * (x2 - x1))
    return np.array([w0, w1, w2])


class _Discretization:
    """Precomputed stencil data for one grid and boundary family."""

    def __init__(self, grid, bc):
        self.grid = grid
        self.bc = bc
        x = grid.nodes
        if x.shape[0] < 5:
            raise ValueError("need at least 5 nodes")
        hm = x[1:-1] - x[:-2]
        hp = x[2:] - x[1:-1]
        self.hm = hm
        self.hp = hp
        self.hbar = 0.5 * (hm + hp)
        # central first derivative on a nonuniform 3-point stencil
        self.d1l = -hp / (hm * (hm + hp))
        self.d1c = (hp - hm) / (hm * hp)
        self.d1r = hm / (hp * (hm + hp))
        # one-sided wall derivatives; right weights ordered (wall, wall-1, wall-2)
        self.wl = _one_sided_weights(x[0], x[1], x[2])
        self.wr = _one_sided_weights(x[-1], x[-2], x[-3])
        # wall rows are scaled by the adjacent cell width inside the Newton
        # system so the banded matrix stays well equilibrated on graded grids
        self.sigma_l = x[1] - x[0]
        self.sigma_r = x[-1] - x[-2]
        # reused by the roundoff allowance: 1/(h- h+)
        self.inv_cell = 1.0 / (hm * hp)

    def gradient(self, u):
        """Central interior slopes, length n_nodes - 2."""
        return self.d1l * u[:-2] + self.d1c * u[1:-1] + self.d1r * u[2:]

    def velocity(self, u):
        """Interior curvature velocity u_xx / (1 + u_x**2).

        The second derivative is evaluated difference-first (slope of
        slopes) to limit cancellation on strongly graded cells; the result
        is algebraically identical to the standard nonuniform weights.
        """
        d = self.gradient(u)
        s = ((u[2:] - u[1:-1]) / self.hp - (u[1:-1] - u[:-2]) / self.hm) / self.hbar
        return s / (1.0 + d * d)

    def wall_residuals(self, u):
        """Unscaled closure residuals and their 3-point derivative rows.

        Returns (r_left, r_right, jac_left, jac_right); jac_left holds the
        partials of r_left with respect to (u[0], u[1], u[2]) and jac_right
        those of r_right with respect to (u[-1], u[-2], u[-3]).
        """
        dl = self.wl[0] * u[0] + self.wl[1] * u[1] + self.wl[2] * u[2]
        dr = self.wr[0] * u[-1] + self.wr[1] * u[-2] + self.wr[2] * u[-3]
        gl, dgl = self.bc.target(-1, u[0])
        gr, dgr = self.bc.target(1, u[-1])
        jl = np.array([self.wl[0] - dgl, self.wl[1], self.wl[2]])
        jr = np.array([self.wr[0] - dgr, self.wr[1], self.wr[2]])
        return dl - gl, dr - gr, jl, jr


def discrete_gradient(u, grid):
    """Second-order node slopes: central inside, one-sided at the walls."""
    u = np.asarray(u, dtype=float)
    x = grid.nodes
    if u.shape != x.shape:
        raise ValueError("values and grid nodes must have matching length")
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    out = np.empty_like(u)
    out[1:-1] = (
        -hp / (hm * (hm + hp)) * u[:-2]
        + (hp - hm) / (hm * hp) * u[1:-1]
        + hm / (hp * (hm + hp)) * u[2:]
    )
    wl = _one_sided_weights(x[0], x[1], x[2])
    wr = _one_sided_weights(x[-1], x[-2], x[-3])
    out[0] = wl[0] * u[0] + wl[1] * u[1] + wl[2] * u[2]
    out[-1] = wr[0] * u[-1] + wr[1] * u[-2] + wr[2] * u[-3]
    return out


def theta_field(state, grid):
    """Slope angle arctan(u_x) at every node; values lie in (-pi/2, pi/2)."""
    return np.arctan(discrete_gradient(state.u, grid))


def semidiscrete_residual(state, problem):
    """Spatial residual: closure mismatches at the walls, du/dt inside.

    Interior entries hold the discrete curvature velocity; the two wall
    entries hold the unscaled closure residuals, which are O(dx**2) for
    smooth compatible data.
    """
    disc = _Discretization(problem.grid, problem.bc)
    u = np.asarray(state.u, dtype=float)
    out = np.empty_like(u)
    out[1:-1] = disc.velocity(u)
    rl, rr, _, _ = disc.wall_residuals(u)
    out[0] = rl
    out[-1] = rr
    return out


def apply_boundary_closure(u, grid, bc):
    """Wall closure residuals and derivative rows for given node values.

    Returns ((r_left, r_right), (jac_left, jac_right)) with the same
    conventions as documented on the solver: residual = one-sided wall
    derivative minus target slope, jacobian rows ordered from the wall
    inward.
    """
    disc = _Discretization(grid, bc)
    rl, rr, jl, jr = disc.wall_residuals(np.asarray(u, dtype=float))
    return (rl, rr), (jl, jr)


# ---------------------------------------------------------------------------
# implicit step


def _roundoff_allowance(disc, v, d, dt):
    """Per-row float64 noise bound added to the Newton tolerance.

    The backward Euler residual contains dt * u_xx / (1 + u_x**2); on a
    cell pair (h-, h+) the discrete second difference amplifies the
    rounding of the stored values by about |u| * eps * 2/(h- h+), so rows
    on strongly graded wall cells cannot be driven below

        eta_i ~ eps * dt * |u|_local / (h-_i h+_i (1 + d_i**2))

    no matter how many Newton iterations run.  The allowance is that
    estimate times a safety factor; on uniform production grids it is
    orders of magnitude below the nominal tolerance and has no effect.
    """
    vmax = np.maximum(np.abs(v[:-2]), np.maximum(np.abs(v[1:-1]), np.abs(v[2:])))
    eta = np.empty_like(v)
    eta[1:-1] = (
        _ROUNDOFF_SAFETY * _EPS * dt * vmax * disc.inv_cell / (1.0 + d * d)
    )
    wl, wr = disc.wl, disc.wr
    scale_l = abs(wl[0] * v[0]) + abs(wl[1] * v[1]) + abs(wl[2] * v[2]) + abs(v[0])
    scale_r = abs(wr[0] * v[-1]) + abs(wr[1] * v[-2]) + abs(wr[2] * v[-3]) + abs(v[-1])
    eta[0] = _ROUNDOFF_SAFETY * _EPS * disc.sigma_l * scale_l
    eta[-1] = _ROUNDOFF_SAFETY * _EPS * disc.sigma_r * scale_r
    return eta


def _assemble(disc, v, u_prev, dt):
    """Backward Euler residual, banded Jacobian, and row tolerances at v."""
    n = v.shape[0]
    d = disc.gradient(v)
    g = 1.0 + d * d
    s = ((v[2:] - v[1:-1]) / disc.hp - (v[1:-1] - v[:-2]) / disc.hm) / disc.hbar
    flow = s / g

    res = np.empty(n)
    res[1:-1] = v[1:-1] - u_prev[1:-1] - dt * flow
    rl, rr, jl, jr = disc.wall_residuals(v)
    res[0] = disc.sigma_l * rl
    res[-1] = disc.sigma_r * rr

    # d(flow)/dv_j = d2_j / g - (2 s d / g^2) d1_j with d2 the standard
    # nonuniform second difference weights
    coef = 2.0 * s * d / (g * g)
    d2l = 2.0 / (disc.hm * (disc.hm + disc.hp))
    d2c = -2.0 * disc.inv_cell
    d2r = 2.0 / (disc.hp * (disc.hm + disc.hp))
    jac_l = -dt * (d2l / g - coef * disc.d1l)
    jac_c = 1.0 - dt * (d2c / g - coef * disc.d1c)
    jac_r = -dt * (d2r / g - coef * disc.d1r)

    # banded storage for solve_banded((2, 2), ...): ab[2 + i - j, j]
    ab = np.zeros((5, n))
    idx = np.arange(1, n - 1)
    ab[2, idx] = jac_c
    ab[3, idx - 1] = jac_l
    ab[1, idx + 1] = jac_r
    ab[2, 0] = disc.sigma_l * jl[0]
    ab[1, 1] = disc.sigma_l * jl[1]
    ab[0, 2] = disc.sigma_l * jl[2]
    ab[2, n - 1] = disc.sigma_r * jr[0]
    ab[3, n - 2] = disc.sigma_r * jr[1]
    ab[4, n - 3] = disc.sigma_r * jr[2]

    tol_rows = _roundoff_allowance(disc, v, d, dt)
    return res, ab, tol_rows


def newton_system(v, u_prev, dt, problem):
    """Residual and dense Jacobian of one backward Euler step at iterate v.

    Exposed for derivative verification; the solver itself works on the
    banded form.  Wall rows carry the cell-width scaling used internally.
    """
    disc = _Discretization(problem.grid, problem.bc)
    v = np.asarray(v, dtype=float)
    res, ab, _ = _assemble(disc, v, np.asarray(u_prev, dtype=float), float(dt))
    n = v.shape[0]
    dense = np.zeros((n, n))
    for k in range(-2, 3):  # k = i - j, matrix entry (j + k, j) = ab[2 + k, j]
        js = np.arange(max(0, -k), n - max(0, k))
        dense[js + k, js] = ab[2 + k, js]
    return res, dense


def _newton_step(disc, state, dt, ctrl):
    """One backward Euler step; returns (new_state, iterations).

    Raises NewtonDiverged on nonfinite residuals, two consecutive residual
    increases, a singular Jacobian, or hitting the iteration cap.
    """
    u = state.u
    # start from the previous state: an explicit predictor u + dt*flow(u)
    # second-differences the O(h) node-to-node noise of the discrete
    # velocity, which on wall-graded cells injects O(dt*noise/(h- h+))
    # into the first residual and strands Newton outside its basin
    v = u.copy()

    prev_norm = math.inf
    increases = 0
    for it in range(1, ctrl.newton_max_iters + 1):
        res, ab, tol_rows = _assemble(disc, v, u, dt)
        if not np.all(np.isfinite(res)):
            raise NewtonDiverged("nonfinite residual at dt={:.3e}".format(dt))
        if np.all(np.abs(res) <= ctrl.newton_tol + tol_rows):
            return State(state.t + dt, v), it
        norm = float(np.max(np.abs(res)))
        if norm > prev_norm:
            increases += 1
            if increases >= 2:
                raise NewtonDiverged("residual growing at dt={:.3e}".format(dt))
        else:
            increases = 0
        prev_norm = norm
        try:
            delta = solve_banded((2, 2), ab, -res, overwrite_ab=True, overwrite_b=True, check_finite=False)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - depends on data
            raise NewtonDiverged("singular Jacobian at dt={:.3e}".format(dt)) from exc
        if not np.all(np.isfinite(delta)):
            raise NewtonDiverged("nonfinite update at dt={:.3e}".format(dt))
        v = v + delta
    raise NewtonDiverged(
        "no convergence in {} iterations at dt={:.3e}".format(ctrl.newton_max_iters, dt)
    )


def step_implicit(state, dt, problem, ctrl=None):
    """Advance one backward Euler step of size dt from the given state.

    The converged iterate satisfies the stepping system to the controller's
    Newton tolerance (plus a per-row float64 allowance that only matters on
    strongly graded wall cells).  A state already solving the system, e.g. a
    constant profile under AffineRobin(0, 0, 0, 0), is returned unchanged
    except for its time.
    """
    if ctrl is None:
        ctrl = StepController()
    if not (math.isfinite(dt) and dt > 0.0):
        raise ValueError("dt must be positive and finite")
    disc = _Discretization(problem.grid, problem.bc)
    new_state, _ = _newton_step(disc, state, float(dt), ctrl)
    return new_state


# ---------------------------------------------------------------------------
# time integration


def advance(
    problem,
    t_end,
    ctrl=None,
    observers=(),
    *,
    snapshot_interval=0.1,
    start=None,
    controller_state=None,
    provenance=None,
):
    """Integrate the problem to t_end, recording snapshots on a fixed cadence.

    Snapshots are taken at every multiple of snapshot_interval in
    (start, t_end] plus the start state and t_end itself; steps are clipped
    to land exactly on those times.  observers are called with each recorded
    state.  Passing `start` (a State) and the `controller_state` stored in a
    previous trajectory's metadata continues that run; because clipping and
    the controller are deterministic, a resumed run reproduces the
    uninterrupted one bitwise.

    Returns a Trajectory.  Raises StepTooSmall (with the partial trajectory
    attached) when repeated Newton failures push the step below the
    controller minimum.
    """
    if ctrl is None:
        ctrl = StepController()
    interval = float(snapshot_interval)
    if not (math.isfinite(interval) and interval > 0.0):
        raise ValueError("snapshot_interval must be positive")
    state = start.copy() if start is not None else initial_state(problem)
    t_end = float(t_end)
    if not math.isfinite(t_end) or t_end <= state.t:
        raise ValueError("t_end must exceed the starting time")
    if state.u.shape != problem.grid.nodes.shape:
        raise ValueError("state length does not match the grid")

    disc = _Discretization(problem.grid, problem.bc)
    dt = ctrl.dt_init
    streak = 0
    if controller_state:
        dt = float(controller_state.get("dt", dt))
        streak = int(controller_state.get("streak", streak))
    dt = min(max(dt, ctrl.dt_min), ctrl.dt_max)

    snapshots = [state.copy()]
    for obs in observers:
        obs(snapshots[0])
    steps = 0
    total_iters = 0
    failures = 0
    dt_history = []
    started = time.perf_counter()

    j = math.floor(state.t / interval + 1e-9) + 1
    while state.t < t_end - 1e-12:
        t_next = min(j * interval, t_end)
        dt_eff = min(dt, ctrl.dt_max, t_next - state.t)
        try:
            new_state, iters = _newton_step(disc, state, dt_eff, ctrl)
        except NewtonDiverged:
            failures += 1
            streak = 0
            dt = dt_eff * ctrl.shrink
            if dt < ctrl.dt_min:
                partial = Trajectory(
                    grid=problem.grid,
                    snapshots=snapshots,
                    metadata=_run_metadata(
                        steps, total_iters, failures, dt_history, dt, streak, started
                    ),
                    provenance=dict(provenance or {}),
                )
                raise StepTooSmall(
                    "step fell below dt_min={:.3e} at t={:.6f}".format(ctrl.dt_min, state.t),
                    trajectory=partial,
                )
            continue
        dt_history.append((state.t, dt_eff, iters))
        state = new_state
        steps += 1
        total_iters += iters
        if iters <= ctrl.fast_iters:
            streak += 1
            if streak >= ctrl.fast_streak:
                dt = min(dt * ctrl.growth, ctrl.dt_max)
                streak = 0
        else:
            streak = 0
        if abs(state.t - t_next) <= 1e-12:
            state.t = t_next  # land exactly, so snapshot times are reproducible
            snapshots.append(state.copy())
            for obs in observers:
                obs(snapshots[-1])
            j += 1

    metadata = _run_metadata(steps, total_iters, failures, dt_history, dt, streak, started)
    return Trajectory(
        grid=problem.grid,
        snapshots=snapshots,
        metadata=metadata,
        provenance=dict(provenance or {}),
    )


def _run_metadata(steps, total_iters, failures, dt_history, dt, streak, started):
    return {
        "steps": steps,
        "newton_iterations": total_iters,
        "newton_failures": failures,
        "dt_history": dt_history,
        "controller_state": {"dt": dt, "streak": streak},
        "wall_clock_s": time.perf_counter() - started,
    }
