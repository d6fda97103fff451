import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from climbprint import planner
from climbprint.controller import ControlRecord, ControlTrace
from climbprint.deposition import (
    BeadSegment,
    MaterialModel,
    bead_width,
    deposited_volume,
    extrusion_for_width,
    interval_volumes,
    max_device_speed,
)
from climbprint.errors import CureTimeInfeasible, DepositionError, NonMonotonicTimestamps, NonPositiveInput
from climbprint.kinematics import Mode

from conftest import circle_design


def swept_width_oracle(q_mm3s, v_m_s, h_m, seconds=1.0, n=1000):
    """Integrate extruded volume over a straight move and divide by the swept v*t*h area."""
    dt = seconds / n
    vol_m3 = math.fsum([q_mm3s * 1e-9 * dt] * n)
    return vol_m3 / (v_m_s * seconds * h_m)


def rec(t, q=0.0, on=False, mode=Mode.PRINTING):
    return ControlRecord(t=t, mode=mode, extrusion_rate=q, extruding=on)


class TestBeadWidth:
    @pytest.mark.parametrize("q,v,h,w", [
        (10.0, 0.005, 0.002, 0.001),
        (20.0, 0.005, 0.002, 0.002),
        (10.0, 0.010, 0.002, 0.0005),
    ])
    def test_examples(self, q, v, h, w):
        assert swept_width_oracle(q, v, h) == pytest.approx(w, rel=1e-12)
        assert bead_width(q, v, h) == pytest.approx(w, rel=1e-12)

    @pytest.mark.parametrize("args", [(0, 1, 1), (1, 0, 1), (1, 1, 0), (-1, 1, 1)])
    def test_non_positive(self, args):
        with pytest.raises(NonPositiveInput):
            bead_width(*args)

    @given(q=st.floats(1e-3, 1e6), v=st.floats(1e-4, 1.0), h=st.floats(1e-4, 0.1), a=st.floats(0.01, 100))
    def test_homogeneous(self, q, v, h, a):
        assert bead_width(a * q, a * v, h) == pytest.approx(bead_width(q, v, h), rel=1e-12)

    @given(q=st.floats(1e-3, 1e6), v=st.floats(1e-4, 1.0), h=st.floats(1e-4, 0.1), f=st.floats(1.001, 10))
    def test_monotone(self, q, v, h, f):
        w = bead_width(q, v, h)
        assert bead_width(q * f, v, h) > w
        assert bead_width(q, v * f, h) < w
        assert bead_width(q, v, h * f) < w

    @given(w=st.floats(1e-3, 0.1), v=st.floats(1e-3, 1.0), h=st.floats(1e-3, 0.05))
    def test_inverse(self, w, v, h):
        assert bead_width(extrusion_for_width(w, v, h), v, h) == pytest.approx(w, rel=1e-12)


class TestMaxDeviceSpeed:
    def mat(self, cure):
        return MaterialModel((1.0, 2.0), cure, 0.02, (0.01, 0.08))

    def test_examples(self):
        assert max_device_speed(self.mat(100.0), 4.0) == pytest.approx(0.04)
        assert max_device_speed(self.mat(628.32), 6.2832) == pytest.approx(0.01)
        assert max_device_speed(self.mat(1e9), 4.0) < 1e-8

    def test_planner_rejects_near_zero_speed(self):
        with pytest.raises(CureTimeInfeasible):
            planner.compile_plan(circle_design(cure=1e9, n_layers=2))

    def test_non_positive_length(self):
        with pytest.raises(NonPositiveInput):
            max_device_speed(self.mat(1.0), 0.0)


class TestDepositedVolume:
    def test_constant_rate(self):
        recs = [rec(0.0, 10.0, True), rec(10.0, 10.0, False)]
        assert deposited_volume(ControlTrace(recs)) == pytest.approx(100.0)

    def test_extrusion_off(self):
        recs = [rec(float(t), 10.0, False) for t in range(5)]
        assert deposited_volume(ControlTrace(recs)) == 0.0

    def test_ramp(self):
        t = np.linspace(0, 10, 10_001)
        oracle = math.fsum((t[1:] - t[:-1]) * 0.5 * (t[1:] + t[:-1]))  # q(t) = t mm^3/s
        recs = [rec(0.0, 0.0, True), rec(10.0, 10.0, True), rec(10.5, 0.0, False)]
        ramp = interval_volumes(recs)[0]
        assert oracle == pytest.approx(50.0, rel=1e-12)
        assert ramp == pytest.approx(oracle, rel=1e-12)
        # the last extruding rate is held until extrusion switches off
        assert deposited_volume(recs) == pytest.approx(50.0 + 10.0 * 0.5, rel=1e-12)

    def test_non_monotonic(self):
        with pytest.raises(NonMonotonicTimestamps):
            deposited_volume([rec(0.0), rec(1.0), rec(1.0)])

    @given(qs=st.lists(st.floats(0, 1e4), min_size=2, max_size=30), dts=st.lists(st.floats(0.01, 5), min_size=29, max_size=29))
    def test_trapezoid_matches_fine_integration(self, qs, dts):
        t = np.concatenate([[0.0], np.cumsum(dts[: len(qs) - 1])])
        recs = [rec(float(tt), q, True) for tt, q in zip(t, qs)] + [rec(float(t[-1]) + 1.0, 0.0, False)]
        fine = 0.0
        for i in range(len(qs) - 1):
            tau = np.linspace(t[i], t[i + 1], 201)
            fine += np.trapezoid(np.interp(tau, t, qs), tau)
        fine += qs[-1] * 1.0
        assert deposited_volume(recs) == pytest.approx(fine, rel=1e-9, abs=1e-9)


class TestModels:
    def test_material_validation(self):
        with pytest.raises(DepositionError):
            MaterialModel((2.0, 1.0), 1.0, 0.02, (0.01, 0.08))
        with pytest.raises(DepositionError):
            MaterialModel((1.0, 2.0), 0.0, 0.02, (0.01, 0.08))
        with pytest.raises(DepositionError):
            MaterialModel((1.0, 2.0), 1.0, 0.02, (0.0, 0.08))

    def test_bead_volume(self):
        b = BeadSegment(0.0, 1.0, 0.001, 0.002, np.array([[0.0, 0.0, 0.001], [1.0, 0.0, 0.001]]))
        assert b.volume == pytest.approx(2e-6)

    def test_closed_bead_length(self):
        sq = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
        b = BeadSegment(0.0, 4.0, 0.01, 0.01, sq, closed=True)
        assert b.length == pytest.approx(4.0)
