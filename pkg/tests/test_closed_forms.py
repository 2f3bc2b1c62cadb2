"""Closed-form profile and barrier tests against frozen reference values.

Reference constants were evaluated independently with mpmath at 30 digits
and are hard-coded; the library must reproduce them in double precision.
"""

import math

import numpy as np
import pytest

from bandflow.closed_forms import (
    LIMIT_SPEED,
    TravelingWave,
    grim_reaper_speed,
    interior_grim_reaper,
    interior_grim_reaper_slope,
    make_lower_solution,
    select_upper_barrier_slope,
    traveling_wave_boundary_height,
    traveling_wave_profile,
    traveling_wave_slope,
    unit_slope_lower_solution,
)

# arctan evaluated at 30 digits
ATAN_3 = 1.2490457723982544258
ATAN_10 = 1.4711276743037345919

# wall heights ln(1 + h**2) / (2 arctan h)
WALL_HEIGHT_H1 = 0.44127120030530318679
WALL_HEIGHT_H2 = 0.72683908067959597889
WALL_HEIGHT_H3 = 0.9217376752226312595

# wave and limit profile samples
WAVE_H1_AT_0_8 = 0.26984447555054012935
REAPER_AT_0_5 = 0.2206356001526515934
REAPER_AT_0_8 = 0.74762016283533630891
REAPER_AT_0_9 = 1.1810048691834836711
REAPER_AT_0_999 = 4.1101273760294664492
REAPER_SLOPE_AT_0_8 = 3.0776835371752534026

# barrier thresholds: wall-inequality crossing time for the slope-2 wave with
# zero shift, and the exact roots of h = wall_height(h) + (pi/2) T + M0
CROSSING_TIME_H2_SHIFT0 = 1.1499457108680757773
BARRIER_ROOT_M1_T1 = 3.5823088025417895959
BARRIER_ROOT_M0_T1 = 2.3791180378098030415


class TestSpeed:
    @pytest.mark.parametrize(
        "h, expected",
        [(1.0, 0.25 * math.pi), (3.0, ATAN_3), (10.0, ATAN_10)],
    )
    def test_reference_values(self, h, expected):
        assert grim_reaper_speed(h) == pytest.approx(expected, rel=1e-15)

    def test_monotone_and_bounded(self):
        rng = np.random.default_rng(11)
        h = np.sort(rng.uniform(1e-6, 1e6, size=300))
        c = grim_reaper_speed(h)
        assert np.all(np.diff(c) > 0)
        assert np.all(c > 0)
        assert np.all(c < LIMIT_SPEED)

    def test_small_slope_limit(self):
        assert grim_reaper_speed(1e-12) == pytest.approx(1e-12, rel=1e-9)

    @pytest.mark.parametrize("bad", [0.0, -1.0, math.nan, math.inf])
    def test_rejects_nonpositive(self, bad):
        with pytest.raises(ValueError):
            grim_reaper_speed(bad)


class TestWaveProfile:
    def test_zero_at_origin(self):
        for h in (0.3, 1.0, 7.5):
            assert traveling_wave_profile(0.0, h) == 0.0

    def test_even_in_x(self):
        rng = np.random.default_rng(12)
        x = rng.uniform(0.0, 1.0, size=200)
        h = rng.uniform(0.1, 50.0, size=200)
        for xi, hi in zip(x, h):
            assert traveling_wave_profile(-xi, hi) == traveling_wave_profile(xi, hi)

    def test_interior_sample(self):
        assert traveling_wave_profile(0.8, 1.0) == pytest.approx(WAVE_H1_AT_0_8, rel=1e-14)

    def test_convex(self):
        x = np.linspace(-1.0, 1.0, 401)
        u = traveling_wave_profile(x, 2.0)
        assert np.all(np.diff(u, 2) > 0)

    def test_rejects_outside_band(self):
        with pytest.raises(ValueError):
            traveling_wave_profile(1.5, 1.0)

    def test_slope_is_derivative(self):
        # central differences converge to the analytic slope at second order
        x = np.array([-0.7, -0.2, 0.0, 0.4, 0.9])
        for h in (0.5, 2.0):
            e1, e2 = 1e-4, 5e-5
            fd1 = (traveling_wave_profile(x + e1, h) - traveling_wave_profile(x - e1, h)) / (2 * e1)
            fd2 = (traveling_wave_profile(x + e2, h) - traveling_wave_profile(x - e2, h)) / (2 * e2)
            err1 = np.abs(fd1 - traveling_wave_slope(x, h))
            err2 = np.abs(fd2 - traveling_wave_slope(x, h))
            assert np.all(err2 <= 0.3 * err1 + 1e-12)

    def test_wall_slope_equals_h(self):
        for h in (0.5, 1.0, 4.0):
            assert traveling_wave_slope(1.0, h) == pytest.approx(h, rel=1e-14)
            assert traveling_wave_slope(-1.0, h) == pytest.approx(-h, rel=1e-14)


class TestWallHeight:
    @pytest.mark.parametrize(
        "h, expected",
        [(1.0, WALL_HEIGHT_H1), (2.0, WALL_HEIGHT_H2), (3.0, WALL_HEIGHT_H3)],
    )
    def test_reference_values(self, h, expected):
        assert traveling_wave_boundary_height(h) == pytest.approx(expected, rel=1e-14)

    def test_matches_profile_at_wall(self):
        rng = np.random.default_rng(13)
        for h in rng.uniform(1e-3, 100.0, size=100):
            assert traveling_wave_boundary_height(h) == pytest.approx(
                traveling_wave_profile(1.0, h), rel=1e-13
            )

    def test_slope_outruns_height(self):
        # h - phi(1; h) grows without bound, the fact the barriers rely on
        h = np.array([1.0, 10.0, 100.0, 1000.0])
        gap = h - traveling_wave_boundary_height(h)
        assert np.all(np.diff(gap) > 0)
        assert gap[-1] > 990.0

    def test_small_h_behaves_like_half_h(self):
        assert traveling_wave_boundary_height(1e-8) == pytest.approx(0.5e-8, rel=1e-6)


class TestInteriorReaper:
    def test_zero_at_origin(self):
        assert interior_grim_reaper(0.0) == 0.0

    @pytest.mark.parametrize(
        "x, expected, rel",
        [
            (0.5, REAPER_AT_0_5, 1e-14),
            (0.8, REAPER_AT_0_8, 1e-14),
            (0.9, REAPER_AT_0_9, 1e-14),
            # the log argument is ~1e-6 away from its root here, so allow
            # for the intrinsic conditioning of the closed form
            (0.999, REAPER_AT_0_999, 1e-11),
        ],
    )
    def test_reference_values(self, x, expected, rel):
        assert interior_grim_reaper(x) == pytest.approx(expected, rel=rel)

    def test_even(self):
        x = np.linspace(0.0, 0.999, 50)
        assert np.array_equal(interior_grim_reaper(-x), interior_grim_reaper(x))

    def test_convex_positive(self):
        x = np.linspace(-0.95, 0.95, 301)
        u = interior_grim_reaper(x)
        assert np.all(np.diff(u, 2) > 0)
        assert np.all(u >= 0)

    @pytest.mark.parametrize("x", [1.0, -1.0, 1.2])
    def test_rejects_walls(self, x):
        with pytest.raises(ValueError):
            interior_grim_reaper(x)
        with pytest.raises(ValueError):
            interior_grim_reaper_slope(x)

    def test_slope_values(self):
        assert interior_grim_reaper_slope(0.0) == 0.0
        assert interior_grim_reaper_slope(0.5) == pytest.approx(1.0, rel=1e-15)
        assert interior_grim_reaper_slope(-0.5) == pytest.approx(-1.0, rel=1e-15)
        assert interior_grim_reaper_slope(0.8) == pytest.approx(REAPER_SLOPE_AT_0_8, rel=1e-14)

    def test_slope_odd_increasing(self):
        x = np.linspace(-0.99, 0.99, 101)
        s = interior_grim_reaper_slope(x)
        assert np.allclose(s + s[::-1], 0.0, atol=1e-12)
        assert np.all(np.diff(s) > 0)

    def test_translation_identity(self):
        # second derivative over (1 + slope**2) equals the ascent speed,
        # which is what makes phi0 + (pi/2) t an exact solution
        x = np.linspace(-0.9, 0.9, 19)
        e = 1e-5
        second = (
            interior_grim_reaper(x + e)
            - 2.0 * interior_grim_reaper(x)
            + interior_grim_reaper(x - e)
        ) / (e * e)
        ratio = second / (1.0 + interior_grim_reaper_slope(x) ** 2)
        assert np.allclose(ratio, LIMIT_SPEED, rtol=1e-5)


class TestWaveToReaperLimit:
    def test_profile_and_slope_converge(self):
        x = np.linspace(0.1, 0.9, 9)
        gaps = []
        slope_gaps = []
        for h in (1e2, 1e4, 1e6):
            gaps.append(np.max(np.abs(traveling_wave_profile(x, h) - interior_grim_reaper(x))))
            slope_gaps.append(
                np.max(
                    np.abs(traveling_wave_slope(x, h) - interior_grim_reaper_slope(x))
                    / (1.0 + interior_grim_reaper_slope(x))
                )
            )
        assert gaps[0] > gaps[1] > gaps[2]
        assert slope_gaps[0] > slope_gaps[1] > slope_gaps[2]
        assert gaps[2] < 1e-4

    def test_speed_approaches_limit(self):
        assert LIMIT_SPEED - grim_reaper_speed(1e6) == pytest.approx(1e-6, rel=1e-5)


class TestTravelingWaveBarrier:
    def test_offset_is_origin_value(self):
        w = TravelingWave(2.0, offset=-3.5, t0=1.0)
        assert w.value(0.0, 1.0) == -3.5

    def test_speed_field_exact(self):
        for h in (0.25, 1.0, 9.0):
            assert TravelingWave(h).c == np.arctan(h)

    def test_rises_at_speed_c(self):
        w = TravelingWave(1.5, offset=0.7)
        x = np.linspace(-1.0, 1.0, 11)
        dv = w.value(x, 2.0) - w.value(x, 0.0)
        assert np.allclose(dv, 2.0 * w.c, rtol=1e-14)

    def test_crossing_time_reference(self):
        w = make_lower_solution(2.0, 0.0)
        assert w.wall_crossing_time() == pytest.approx(CROSSING_TIME_H2_SHIFT0, rel=1e-13)
        # wall height equals the wall slope exactly at the crossing
        t_star = w.wall_crossing_time()
        assert w.boundary_height(t_star) == pytest.approx(2.0, rel=1e-12)

    def test_validity_switch(self):
        w = make_lower_solution(2.0, 0.0)
        t_star = w.wall_crossing_time()
        assert not w.is_lower_solution_at(t_star - 1e-6)
        assert w.is_lower_solution_at(t_star + 1e-6)
        assert w.is_upper_solution_at(t_star - 1e-6)
        assert not w.is_upper_solution_at(t_star + 1e-6)

    def test_unit_slope_barrier_valid_from_start(self):
        w = unit_slope_lower_solution()
        assert w.h == 1.0
        assert w.offset == pytest.approx(1.0 - WALL_HEIGHT_H1, rel=1e-14)
        assert abs(w.wall_crossing_time()) < 1e-12
        for t in (0.0, 0.5, 3.0, 100.0):
            assert w.is_lower_solution_at(t)

    def test_large_shift_valid_immediately(self):
        w = make_lower_solution(3.0, 50.0)
        assert w.wall_crossing_time() < 0.0
        assert w.is_lower_solution_at(0.0)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            TravelingWave(-1.0)
        with pytest.raises(ValueError):
            TravelingWave(1.0, offset=math.nan)


class TestUpperBarrierSelection:
    def _excess(self, h, m0, horizon):
        return h - traveling_wave_boundary_height(h) - LIMIT_SPEED * horizon - m0

    def test_root_m1_t1(self):
        h = select_upper_barrier_slope(1.0, 1.0)
        assert self._excess(h, 1.0, 1.0) > 0.0
        assert abs(h - BARRIER_ROOT_M1_T1) <= 2e-9

    def test_root_m0_t1(self):
        h = select_upper_barrier_slope(0.0, 1.0)
        assert self._excess(h, 0.0, 1.0) > 0.0
        assert abs(h - BARRIER_ROOT_M0_T1) <= 2e-9

    def test_short_horizon_small_slope_suffices(self):
        h = select_upper_barrier_slope(0.0, 1e-9)
        assert self._excess(h, 0.0, 1e-9) > 0.0
        assert h < 1.0

    def test_negative_offset_returns_first_rung(self):
        # with m0 + (pi/2) T < 0 the inequality holds for every slope
        h = select_upper_barrier_slope(-10.0, 1.0)
        assert h == 1.0
        assert self._excess(h, -10.0, 1.0) > 0.0

    def test_monotone_in_horizon(self):
        hs = [select_upper_barrier_slope(1.0, t) for t in (0.5, 1.0, 2.0, 4.0)]
        assert all(b >= a for a, b in zip(hs, hs[1:]))

    def test_monotone_in_offset(self):
        hs = [select_upper_barrier_slope(m, 1.0) for m in (0.0, 1.0, 5.0)]
        assert all(b >= a for a, b in zip(hs, hs[1:]))

    @pytest.mark.parametrize("bad_t", [0.0, -1.0, math.nan])
    def test_rejects_bad_horizon(self, bad_t):
        with pytest.raises(ValueError):
            select_upper_barrier_slope(0.0, bad_t)
