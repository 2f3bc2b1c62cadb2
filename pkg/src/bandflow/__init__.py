"""Simulation and verification toolkit for graphical curvature flow in a band.

The package integrates u_t = u_xx / (1 + u_x**2) on the interval [-1, 1]
under slope boundary conditions coupling u_x at the walls to the boundary
height, and ships the closed-form translating profiles, comparison
diagnostics, and refinement studies needed to check the computed dynamics
against exact solutions.
"""

from bandflow._version import __version__
from bandflow.closed_forms import (
    TravelingWave,
    grim_reaper_speed,
    interior_grim_reaper,
    interior_grim_reaper_slope,
    make_lower_solution,
    select_upper_barrier_slope,
    traveling_wave_boundary_height,
    traveling_wave_profile,
)
from bandflow.solver import (
    AffineRobin,
    ConstantNeumann,
    Grid,
    NewtonDiverged,
    NonlinearRobin,
    Problem,
    State,
    StepController,
    StepTooSmall,
    Trajectory,
    advance,
    make_graded_grid,
    step_implicit,
)

__all__ = [
    "AffineRobin",
    "ConstantNeumann",
    "Grid",
    "NewtonDiverged",
    "NonlinearRobin",
    "Problem",
    "State",
    "StepController",
    "StepTooSmall",
    "Trajectory",
    "TravelingWave",
    "advance",
    "grim_reaper_speed",
    "interior_grim_reaper",
    "interior_grim_reaper_slope",
    "make_graded_grid",
    "make_lower_solution",
    "select_upper_barrier_slope",
    "step_implicit",
    "traveling_wave_boundary_height",
    "traveling_wave_profile",
    "__version__",
]
