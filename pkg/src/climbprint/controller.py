"""Execute a print plan as a deterministic stream of actuator commands.

Records are emitted on a fixed ``dt`` grid plus extra records at event
boundaries (phase changes, speed changes, climb start/end). A record's
commands hold from its timestamp until the next record; pose is integrated
from the held wheel speeds and foot angle by :func:`step`, which the
simulator reuses for replay.

Every numeric field is rounded to 9 decimals when the record is built, so a
trace survives a CSV round trip bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import hashlib
import math

import numpy as np

from . import geometry, kinematics
from .errors import ClimbPrintError, LimitViolation
from .kinematics import CLIMB_ANGLE, DeviceState, Mode
from .planner import Direction, PrintMode

DEFAULT_DT = 0.1
SNAP = 1e-7  # m; positions closer than this to a boundary count as on it
LIMIT_TOL = 1e-9


def q9(x):
    return float(f"{x:.9f}") + 0.0


@dataclass(frozen=True)
class ControlRecord:
    t: float
    mode: Mode
    wheel_surface_speeds: tuple = (0.0, 0.0, 0.0, 0.0)
    foot_angle: float = 0.0
    clamp_gap: float = 0.0
    head_u: float = 0.0
    head_v: float = 0.0
    extrusion_rate: float = 0.0
    extruding: bool = False


@dataclass(frozen=True)
class ControlTrace:
    records: tuple
    plan_digest: str = ""

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self):
        return len(self.records)

    @property
    def duration(self):
        if not self.records:
            return 0.0
        return self.records[-1].t - self.records[0].t

    def checksum(self):
        h = hashlib.sha256(self.plan_digest.encode())
        for r in self.records:
            h.update(repr((r.t, r.mode.value, r.wheel_surface_speeds, r.foot_angle, r.clamp_gap,
                           r.head_u, r.head_v, r.extrusion_rate, r.extruding)).encode())
        return h.hexdigest()

    def problems(self):
        """Well-formedness violations (empty when the trace is valid)."""
        out = []
        recs = self.records
        if not recs:
            return out
        if recs[0].mode is not Mode.IDLE or recs[0].extruding:
            out.append("first record must be idle with extrusion off")
        if recs[-1].mode is not Mode.DONE:
            out.append("last record must be done")
        for i in range(1, len(recs)):
            if not recs[i].t > recs[i - 1].t:
                out.append(f"timestamp not increasing at record {i}")
                break
        for i, r in enumerate(recs):
            if r.extruding and r.mode in (Mode.CLIMBING, Mode.REVERSING):
                out.append(f"extrusion during {r.mode.value} at record {i}")
                break
        return out


def _check_limits(record, config):
    if config is None:
        return
    u_max = config.head_side_travel
    f_max = config.head_fb_travel
    if abs(record.head_u) > u_max + LIMIT_TOL:
        raise LimitViolation("head side travel exceeded", value=record.head_u)
    if abs(record.head_v) > f_max + LIMIT_TOL:
        raise LimitViolation("head front-back travel exceeded", value=record.head_v)
    lo, hi = config.foot_angle_range
    if not lo - LIMIT_TOL <= record.foot_angle <= hi + LIMIT_TOL:
        raise LimitViolation("foot angle outside its range", value=record.foot_angle)
    vmax = config.max_wheel_speed
    for w in record.wheel_surface_speeds:
        if abs(w) > vmax * (1 + LIMIT_TOL) + LIMIT_TOL:
            raise LimitViolation("wheel surface speed above limit", value=w)
    t_min, t_max = config.clamp_range
    if record.clamp_gap != 0.0:
        if not t_min - LIMIT_TOL <= record.clamp_gap <= t_max + LIMIT_TOL:
            raise LimitViolation("clamp gap outside clamp range", value=record.clamp_gap)


def step(state: DeviceState, record: ControlRecord, config=None) -> DeviceState:
    """Advance ``state`` to ``record.t`` under the held commands, then apply ``record``."""
    if state.mode is Mode.DONE:
        raise LimitViolation("no transitions out of done", value=record.mode.value)
    if record.extruding and record.mode in (Mode.CLIMBING, Mode.REVERSING):
        raise LimitViolation(f"extrusion requested while {record.mode.value}", value=record.extrusion_rate)
    if record.t < state.t:
        raise LimitViolation("record earlier than current state", value=record.t)
    _check_limits(record, config)
    moved = kinematics.advance(state, record.t - state.t)
    return replace(
        moved,
        t=record.t,
        mode=record.mode,
        wheel_surface_speeds=tuple(record.wheel_surface_speeds),
        foot_angle=record.foot_angle,
        clamp_gap=record.clamp_gap,
        head_u=record.head_u,
        head_v=record.head_v,
        extruding=record.extruding,
    )


def initial_state(plan):
    return DeviceState(s=plan.start_s, z=plan.layer_height, t=0.0)


def replay(trace, initial, config=None):
    """Fold :func:`step` over a trace; returns every intermediate state."""
    states = []
    state = initial
    for i, rec in enumerate(trace.records):
        try:
            state = step(state, rec, config)
        except LimitViolation as exc:
            exc.t, exc.index = rec.t, i
            raise
        states.append(state)
    return states


class _Executor:
    def __init__(self, plan, config, dt):
        self.plan = plan
        self.config = config
        self.dt = dt
        self.state = initial_state(plan)
        self.records = []
        self.next_t = 0.0
        self.gap = kinematics.clamp(0.0, plan.thickness, config).gap if plan.layers else 0.0

    # -- emission ---------------------------------------------------------
    def emit(self, mode, speeds=(0.0, 0.0, 0.0, 0.0), foot=0.0, head=(0.0, 0.0), q=0.0, extruding=False):
        rec = ControlRecord(
            t=q9(self.next_t),
            mode=mode,
            wheel_surface_speeds=tuple(q9(w) for w in speeds),
            foot_angle=q9(foot),
            clamp_gap=q9(self.gap),
            head_u=q9(head[0]),
            head_v=q9(head[1]),
            extrusion_rate=q9(q) if extruding else 0.0,
            extruding=bool(extruding),
        )
        try:
            self.state = step(self.state, rec, self.config)
        except LimitViolation as exc:
            exc.t, exc.index = rec.t, len(self.records)
            raise
        self.records.append(rec)
        return rec

    def predicted(self):
        """State at ``next_t`` under the currently held commands."""
        return kinematics.advance(self.state, q9(self.next_t) - self.state.t)

    def set_next(self, t_event):
        t_now = q9(self.next_t)
        t_grid = (math.floor(t_now / self.dt + 1e-9) + 1) * self.dt
        t_next = q9(min(t_event, t_grid))
        if t_next <= t_now:
            t_next = q9(t_now + 1e-9)
        self.next_t = t_next

    # -- phases ------------------------------------------------------------
    def _boundary(self, lp, sigma, sigma_end, sign, changes):
        """Next station (along travel) where the speed changes, capped at ``sigma_end``."""
        st = lp.s_grid[changes]
        if sign > 0:
            ahead = st[st > sigma + SNAP]
            b = ahead[0] if len(ahead) else sigma_end
            return min(b, sigma_end)
        ahead = st[st < sigma - SNAP]
        b = ahead[-1] if len(ahead) else sigma_end
        return max(b, sigma_end)

    def roll(self, lp, sigma_end, changes):
        plan, cfg = self.plan, self.config
        sign = lp.direction.sign
        foot = lp.foot_angle
        cos_f, _ = kinematics.foot_cos_sin(q9(foot))
        while True:
            pred = self.predicted()
            sigma = pred.s - lp.s_offset
            if (sigma_end - sigma) * sign <= SNAP:
                return
            probe = sigma + sign * SNAP
            v = lp.speed_at(probe)
            q = lp.extrusion_at(probe)
            _, _, kappa = geometry.evaluate(plan.path, np.array([pred.s]))
            left, right, _, _ = kinematics.wheel_speeds(sign * v / cos_f, float(kappa[0]), plan.thickness, cfg)
            speeds = (q9(left), q9(right), q9(left), q9(right))
            v_actual = abs(sum(speeds) / 4.0 * cos_f)
            boundary = self._boundary(lp, sigma, sigma_end, sign, changes)
            t_now = q9(self.next_t)
            self.emit(Mode.PRINTING, speeds, foot, lp.head_at(sigma), q, True)
            self.set_next(t_now + abs(boundary - sigma) / v_actual)

    def head_move(self, lp, sigma_from, sigma_to, changes):
        sign = lp.direction.sign
        sigma = sigma_from
        while (sigma_to - sigma) * sign > SNAP:
            probe = sigma + sign * SNAP
            v = lp.speed_at(probe)
            q = lp.extrusion_at(probe)
            boundary = self._boundary(lp, sigma, sigma_to, sign, changes)
            t_now = q9(self.next_t)
            self.emit(Mode.PRINTING, head=lp.head_at(sigma), q=q, extruding=True)
            self.set_next(t_now + abs(boundary - sigma) / v)
            sigma = sigma + sign * v * (self.next_t - t_now)
            if (boundary - sigma) * sign < SNAP:
                sigma = boundary

    def head_out(self, lp):
        u1, v1 = lp.head_at(lp.start)
        dur = self.plan.head_out_time
        t0 = q9(self.next_t)
        u0, v0 = self.state.head_u, self.state.head_v
        while q9(self.next_t) < t0 + dur - 1e-9:
            f = (q9(self.next_t) - t0) / dur
            self.emit(Mode.IDLE, head=(u0 + f * (u1 - u0), v0 + f * (v1 - v0)))
            self.set_next(t0 + dur)

    def climb(self, lp):
        if lp.climb_after <= 0:
            return
        c = self.plan.climb_speed
        t_now = q9(self.next_t)
        self.emit(Mode.CLIMBING, speeds=(c, c, c, c), foot=CLIMB_ANGLE, head=lp.head_at(lp.end))
        self.next_t = q9(t_now + lp.climb_after / c)

    def run(self):
        plan = self.plan
        self.emit(Mode.IDLE)
        self.next_t = self.dt
        if not plan.layers:
            self.emit(Mode.DONE)
            return
        if plan.mode is PrintMode.SPIRAL:
            self.next_t = self.dt / 2.0
            self.emit(Mode.IDLE, foot=plan.layers[0].foot_angle)
            self.next_t = self.dt
        for lp in plan.layers:
            changes = np.nonzero(np.diff(lp.speed_profile[:-1]) != 0)[0] + 1
            if lp.dwell_before > 0:
                t_now = q9(self.next_t)
                self.emit(Mode.REVERSING, head=(self.state.head_u, self.state.head_v))
                self.next_t = q9(t_now + lp.dwell_before)
            if lp.head_out:
                self.head_out(lp)
            sign = lp.direction.sign
            if sign > 0:
                first, second = lp.roll_start, lp.roll_end
            else:
                first, second = lp.roll_end, lp.roll_start
            self.head_move(lp, lp.start, first, changes)
            self.roll(lp, second, changes)
            self.head_move(lp, second, lp.end, changes)
            self.climb(lp)
        self.emit(Mode.DONE, head=(self.state.head_u, self.state.head_v))


def execute_with_state(plan, config, dt=DEFAULT_DT):
    """Like :func:`execute` but also returns the controller's final device state."""
    if not dt > 0:
        raise LimitViolation("dt must be positive", value=dt)
    if plan.layers:
        if dt > plan.cure_time / 100.0:
            raise LimitViolation("dt must not exceed cure_time / 100", value=dt)
        v_max = max(float(np.max(lp.speed_profile)) for lp in plan.layers)
        spacing = float(np.min(np.diff(plan.path.s)))
        if dt > spacing / v_max * (1 + 1e-9):
            raise LimitViolation("dt must not exceed resample step / max speed", value=dt)
    ex = _Executor(plan, config, dt)
    try:
        ex.run()
    except LimitViolation:
        raise
    except ClimbPrintError as exc:
        raise LimitViolation(str(exc), value=exc.value, t=q9(ex.next_t), index=len(ex.records)) from exc
    return ControlTrace(ex.records, plan.digest), ex.state


def execute(plan, config, dt=DEFAULT_DT) -> ControlTrace:
    """Run the plan through the controller state machine."""
    return execute_with_state(plan, config, dt)[0]


def count_events(trace):
    """Counts of mode entries and extrusion switches in a trace."""
    counts = {"climbs": 0, "reversals": 0, "extrusion_on": 0, "extrusion_off": 0}
    prev = None
    for r in trace.records:
        if r.mode is Mode.CLIMBING and (prev is None or prev.mode is not Mode.CLIMBING):
            counts["climbs"] += 1
        if r.mode is Mode.REVERSING and (prev is None or prev.mode is not Mode.REVERSING):
            counts["reversals"] += 1
        if prev is not None and r.extruding != prev.extruding:
            counts["extrusion_on" if r.extruding else "extrusion_off"] += 1
        prev = r
    return counts
