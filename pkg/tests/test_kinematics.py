import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from climbprint import kinematics
from climbprint.errors import (
    ExtrusionActiveDuringClimb,
    HeadTravelExceeded,
    KinematicsError,
    OpenPathSpiral,
    SpeedLimitExceeded,
    WallTooCurved,
    WallTooThick,
    WallTooThin,
)
from climbprint.geometry import PathSpec, chord_sagitta, resample
from climbprint.kinematics import DeviceState, Mode

from conftest import circle_points, device


def contact_circle_ratio(radius, thickness, n=100_000):
    """Outer/inner wheel travel over one revolution, from offset-circle arclengths."""
    th = np.linspace(0, 2 * np.pi, n + 1)

    def length(r):
        pts = r * np.column_stack([np.cos(th), np.sin(th)])
        return math.fsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))

    return length(radius + thickness / 2) / length(radius - thickness / 2)


class TestWheelSpeeds:
    def test_straight(self):
        assert kinematics.wheel_speeds(0.01, 0.0, 0.04) == (0.01, 0.01, 0.01, 0.01)

    def test_unit_circle(self):
        fl, fr, rl, rr = kinematics.wheel_speeds(0.01, 1.0, 0.04)
        assert (fl, rl) == (pytest.approx(0.0098), pytest.approx(0.0098))
        assert (fr, rr) == (pytest.approx(0.0102), pytest.approx(0.0102))
        assert fr / fl == pytest.approx(contact_circle_ratio(1.0, 0.04), abs=1e-6)
        assert round(fr / fl, 6) == 1.040816

    def test_tight_circle(self):
        fl, fr, _, _ = kinematics.wheel_speeds(0.01, 25.0, 0.04)
        assert fr / fl == pytest.approx(3.0)
        assert contact_circle_ratio(0.04, 0.04) == pytest.approx(3.0, abs=1e-6)

    def test_right_turn_swaps_sides(self):
        fl, fr, _, _ = kinematics.wheel_speeds(0.01, -1.0, 0.04)
        assert fl > fr

    def test_too_curved(self):
        with pytest.raises(WallTooCurved):
            kinematics.wheel_speeds(0.01, 50.0, 0.04)

    def test_speed_limit(self):
        with pytest.raises(SpeedLimitExceeded):
            kinematics.wheel_speeds(0.2, 1.0, 0.04, device())

    @given(v=st.floats(0, 0.5), k=st.floats(-20, 20), t=st.floats(0.001, 0.09))
    def test_mean_is_centerline_speed(self, v, k, t):
        fl, fr, rl, rr = kinematics.wheel_speeds(v, k, t)
        assert (fl + fr) / 2 == pytest.approx(v, abs=1e-15)
        assert fl == rl and fr == rr

    @given(k=st.floats(-20, 20), t=st.floats(0.001, 0.09), vmax=st.floats(0.01, 1))
    def test_max_centerline_speed_hits_limit(self, k, t, vmax):
        v = kinematics.max_centerline_speed(k, t, vmax)
        assert max(map(abs, kinematics.wheel_speeds(v, k, t))) == pytest.approx(vmax, rel=1e-12)


class TestClamp:
    def test_in_range(self):
        r = kinematics.clamp(0.0, 0.04, device())
        assert r.attached and r.gap == 0.04

    def test_too_thin(self):
        with pytest.raises(WallTooThin):
            kinematics.clamp(0.0, 0.01, device())

    def test_too_thick(self):
        with pytest.raises(WallTooThick):
            kinematics.clamp(0.0, 0.11, device())

    def test_bounds_inclusive(self):
        assert kinematics.clamp(0.0, 0.10, device()).attached
        assert kinematics.clamp(0.0, 0.02, device()).attached


class TestClimb:
    def test_example(self):
        st0 = DeviceState(s=1.3, z=0.10, mode=Mode.PRINTING)
        st1 = kinematics.climb_step(st0, 0.02)
        assert st1.z == pytest.approx(0.12)
        assert st1.s == 1.3 and st1.foot_angle == 0.0 and st1.mode is Mode.PRINTING

    def test_zero_height(self):
        st0 = DeviceState(s=1.3, z=0.10, mode=Mode.IDLE)
        assert kinematics.climb_step(st0, 0.0) == st0

    def test_extrusion_blocks_climb(self):
        with pytest.raises(ExtrusionActiveDuringClimb):
            kinematics.climb_step(DeviceState(extruding=True, mode=Mode.PRINTING), 0.02)

    def test_wrong_mode(self):
        with pytest.raises(KinematicsError):
            kinematics.climb_step(DeviceState(mode=Mode.DONE), 0.02)

    @given(hs=st.lists(st.floats(0, 0.05), max_size=20))
    def test_climb_conservation(self, hs):
        s = DeviceState(z=0.0, mode=Mode.IDLE)
        for h in hs:
            s = kinematics.climb_step(s, h)
        assert s.z == pytest.approx(math.fsum(hs), abs=1e-12)

    def test_climb_via_advance(self):
        # a climb driven through the motion law: foot at 90 deg for h / v seconds
        s = DeviceState(z=0.1, foot_angle=90.0, wheel_surface_speeds=(0.2,) * 4)
        s = kinematics.advance(s, 0.02 / 0.2)
        assert s.z == pytest.approx(0.12, abs=1e-15) and s.s == 0.0


class TestSpiralTilt:
    def rise_per_revolution(self, h, perimeter, n=10_000):
        """Roll one perimeter along the tilted foot in small steps and sum the rise."""
        tilt = kinematics.spiral_tilt(h, perimeter)
        v = 0.05
        total_t = perimeter / (v * math.cos(math.radians(tilt)))
        s = DeviceState(foot_angle=tilt, wheel_surface_speeds=(v,) * 4)
        for _ in range(n):
            s = kinematics.advance(s, total_t / n)
        return s.s, s.z

    def test_unit_circle(self):
        ds, dz = self.rise_per_revolution(0.02, 6.2832)
        assert ds == pytest.approx(6.2832, abs=1e-9)
        assert dz == pytest.approx(0.02, abs=1e-6)
        assert kinematics.spiral_tilt(0.02, 6.2832) == pytest.approx(0.182377, abs=1e-6)

    def test_square(self):
        assert kinematics.spiral_tilt(0.02, 4.0) == pytest.approx(0.28648, abs=1e-5)
        _, dz = self.rise_per_revolution(0.02, 4.0)
        assert dz == pytest.approx(0.02, abs=1e-6)

    def test_flat(self):
        assert kinematics.spiral_tilt(0.0, 6.2832) == 0.0

    def test_open_path(self):
        with pytest.raises(OpenPathSpiral):
            kinematics.spiral_tilt(0.02, 4.0, closed=False)


class TestHead:
    def test_limits(self):
        cfg = device()
        st0 = DeviceState()
        assert kinematics.head_offset(st0, 0.1, -0.25, cfg).head_u == 0.1
        with pytest.raises(HeadTravelExceeded):
            kinematics.head_offset(st0, 0.1 + 1e-6, 0.0, cfg)
        with pytest.raises(HeadTravelExceeded):
            kinematics.head_offset(st0, 0.0, 0.2501, cfg)

    def test_centered_on_straight_wall(self):
        p = resample(PathSpec(np.array([[0.0, 0.0], [2.0, 0.0]]), False, 0.04), 0.01)
        np.testing.assert_allclose(kinematics.nozzle_xy(p, 0.4, 1.0, 0.0, 0.0), [1.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(kinematics.nozzle_xy(p, 0.4, 1.0, 0.01, 0.0), [1.0, 0.01], atol=1e-12)
        np.testing.assert_allclose(kinematics.nozzle_xy(p, 0.4, 1.0, 0.0, 0.1), [1.1, 0.0], atol=1e-12)

    def test_frame_on_circle(self):
        p = resample(PathSpec(circle_points(1.0, 720), True, 0.04), 0.01)
        s = np.linspace(0, p.total_length, 50)
        mid, t = kinematics.frame_pose(p, s, 0.4)
        # rigid chord of length 0.4: its midpoint sits one sagitta inside the circle
        np.testing.assert_allclose(1.0 - np.linalg.norm(mid, axis=1), chord_sagitta(1.0, 0.4), atol=1e-9)
        np.testing.assert_allclose(np.linalg.norm(t, axis=1), 1.0, atol=1e-12)

    @given(s=st.floats(0, 6.2), u=st.floats(-0.1, 0.1), v=st.floats(-0.25, 0.25))
    def test_head_coordinates_inverse(self, s, u, v):
        p = _circle()
        xy = kinematics.nozzle_xy(p, 0.4, s, u, v)
        u2, v2 = kinematics.head_coordinates(p, 0.4, s, xy)
        assert (float(u2), float(v2)) == (pytest.approx(u, abs=1e-12), pytest.approx(v, abs=1e-12))


_C = []


def _circle():
    if not _C:
        _C.append(resample(PathSpec(circle_points(1.0, 720), True, 0.04), 0.01))
    return _C[0]


class TestConfig:
    def test_invalid(self):
        with pytest.raises(KinematicsError):
            device(wheelbase=0.0)
        with pytest.raises(KinematicsError):
            device(clamp_range=(0.1, 0.02))
        with pytest.raises(KinematicsError):
            device(foot_angle_range=(0.0, 200.0))

    def test_foot_trig_exact_at_setpoints(self):
        assert kinematics.foot_cos_sin(0.0) == (1.0, 0.0)
        assert kinematics.foot_cos_sin(90.0) == (0.0, 1.0)

    def test_lowest_point(self):
        assert kinematics.lowest_point(0.1, 0.02, 0.02, 0.06) == pytest.approx(0.04)
