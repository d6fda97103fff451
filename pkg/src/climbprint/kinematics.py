"""Device geometry and motion laws.

The model is kinematic: wheels roll without slip, there is no inertia and
no gravity load. The device frame is rigid; its front and rear wheel
contacts sit on the path a straight wheelbase apart, symmetric in arclength
about the reference ``s``, and the reference point is the midpoint of that
chord.

Wheel order everywhere is front-left, front-right, rear-left, rear-right,
with left/right taken relative to the path's forward direction (the device
never turns around; reverse travel means negative wheel speeds).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import enum
import math

import numpy as np

from . import geometry
from .errors import (
    ExtrusionActiveDuringClimb,
    HeadTravelExceeded,
    KinematicsError,
    OpenPathSpiral,
    SpeedLimitExceeded,
    WallTooCurved,
    WallTooThick,
    WallTooThin,
)

TRAVEL_ANGLE = 0.0
CLIMB_ANGLE = 90.0
LIMIT_TOL = 1e-9
FRAME_NEWTON_ITERS = 4


class Mode(str, enum.Enum):
    IDLE = "idle"
    PRINTING = "printing"
    CLIMBING = "climbing"
    REVERSING = "reversing"
    DONE = "done"


@dataclass(frozen=True)
class DeviceConfig:
    wheelbase: float
    clamp_range: tuple
    head_side_travel: float
    head_fb_travel: float
    foot_height: float
    wheel_radius: float
    max_wheel_speed: float
    foot_angle_range: tuple = (0.0, 180.0)

    def __post_init__(self):
        t_min, t_max = self.clamp_range
        for name in ("wheelbase", "head_side_travel", "head_fb_travel", "foot_height", "wheel_radius", "max_wheel_speed"):
            if not getattr(self, name) > 0:
                raise KinematicsError(f"{name} must be positive", value=getattr(self, name))
        if not 0 < t_min < t_max:
            raise KinematicsError("clamp range needs 0 < t_min < t_max", value=self.clamp_range)
        lo, hi = self.foot_angle_range
        if not 0.0 <= lo < hi <= 180.0:
            raise KinematicsError("foot angle range must lie within [0, 180]", value=self.foot_angle_range)
        object.__setattr__(self, "clamp_range", (float(t_min), float(t_max)))
        object.__setattr__(self, "foot_angle_range", (float(lo), float(hi)))


@dataclass(frozen=True)
class DeviceState:
    s: float = 0.0
    z: float = 0.0  # nozzle height above the local footprint top
    foot_angle: float = 0.0
    clamp_gap: float = 0.0
    head_u: float = 0.0
    head_v: float = 0.0
    wheel_surface_speeds: tuple = (0.0, 0.0, 0.0, 0.0)
    extruding: bool = False
    mode: Mode = Mode.IDLE
    t: float = 0.0


def wheel_speeds(v, curvature, thickness, config=None):
    """Surface speeds that keep both wall faces rolling without slip.

    Each side runs in proportion to the radius of its own wall face, so the
    mean of the two sides is exactly ``v``.
    """
    half = curvature * thickness / 2.0
    if abs(half) >= 1.0:
        raise WallTooCurved("inner wall face radius is not positive", value=curvature)
    left = v * (1.0 - half)
    right = v * (1.0 + half)
    speeds = (left, right, left, right)
    if config is not None and max(abs(left), abs(right)) > config.max_wheel_speed * (1 + LIMIT_TOL):
        raise SpeedLimitExceeded("wheel surface speed above limit", value=max(abs(left), abs(right)))
    return speeds


def max_centerline_speed(curvature, thickness, max_wheel_speed):
    """Largest centerline speed whose outer wheel stays at the limit."""
    return max_wheel_speed / (1.0 + np.abs(curvature) * thickness / 2.0)


@dataclass(frozen=True)
class ClampResult:
    attached: bool
    gap: float


def clamp(gap, wall_thickness, config):
    """Close the facing wheels onto a wall; bounds are inclusive."""
    t_min, t_max = config.clamp_range
    if wall_thickness < t_min:
        raise WallTooThin("wall thinner than the clamp can close", value=wall_thickness)
    if wall_thickness > t_max:
        raise WallTooThick("wall thicker than the clamp can open", value=wall_thickness)
    return ClampResult(attached=True, gap=float(wall_thickness))


def climb_step(state, layer_height):
    """Lift the device one layer: feet to 90, drive up, feet back to 0."""
    if state.extruding:
        raise ExtrusionActiveDuringClimb("extrusion must be off before climbing", value=state.mode)
    if state.mode not in (Mode.PRINTING, Mode.IDLE):
        raise KinematicsError("can only climb from printing or idle", value=state.mode)
    if layer_height == 0:
        return state
    return replace(state, z=state.z + layer_height, foot_angle=TRAVEL_ANGLE)


def climb_duration(layer_height, config):
    return layer_height / config.max_wheel_speed


def spiral_tilt(layer_height, layer_perimeter, closed=True):
    """Foot tilt (deg from the travel orientation) giving one layer of rise per revolution."""
    if not closed:
        raise OpenPathSpiral("spiral printing needs a closed path")
    if not layer_perimeter > 0:
        raise KinematicsError("perimeter must be positive", value=layer_perimeter)
    return math.degrees(math.atan2(layer_height, layer_perimeter))


def head_offset(state, u, v, config):
    if abs(u) > config.head_side_travel * (1 + LIMIT_TOL):
        raise HeadTravelExceeded("side travel exceeded", value=u)
    if abs(v) > config.head_fb_travel * (1 + LIMIT_TOL):
        raise HeadTravelExceeded("front-back travel exceeded", value=v)
    return replace(state, head_u=u, head_v=v)


def foot_cos_sin(angle_deg):
    """cos/sin of a foot angle, exact at the travel and climb setpoints."""
    if angle_deg == TRAVEL_ANGLE:
        return 1.0, 0.0
    if angle_deg == CLIMB_ANGLE:
        return 0.0, 1.0
    a = math.radians(angle_deg)
    return math.cos(a), math.sin(a)


def advance(state, dt):
    """Integrate pose over ``dt`` with the state's held wheel speeds and foot angle."""
    if dt == 0:
        return state
    w = state.wheel_surface_speeds
    v = (w[0] + w[1] + w[2] + w[3]) / 4.0
    if v == 0:
        return state
    c, s = foot_cos_sin(state.foot_angle)
    return replace(state, s=state.s + v * c * dt, z=state.z + v * s * dt)


def frame_pose(path, s, wheelbase):
    """Chord midpoint and unit chord direction of the rigid frame at reference ``s``.

    The wheel contacts sit symmetrically in arclength about ``s`` and a
    straight ``wheelbase`` apart.
    """
    s = np.asarray(s, dtype=float)
    _, _, kappa = geometry.evaluate(path, s)
    x = np.clip(np.abs(kappa) * wheelbase / 2.0, 0.0, 1.0)
    safe = np.where(kappa == 0, 1.0, np.abs(kappa))
    a = np.where(kappa == 0, wheelbase / 2.0, np.arcsin(x) / safe)
    for _ in range(FRAME_NEWTON_ITERS):
        rear, tr, _ = geometry.evaluate(path, _clip_open(path, s - a))
        front, tf, _ = geometry.evaluate(path, _clip_open(path, s + a))
        chord = front - rear
        c = np.linalg.norm(chord, axis=-1)
        err = c - wheelbase
        if np.all(np.abs(err) < 1e-13):
            break
        dc = np.sum(chord * (tf + tr), axis=-1) / np.where(c > 0, c, 1.0)
        a = a - err / np.where(dc > 1e-9, dc, 1.0)
    mid = 0.5 * (rear + front)
    t = chord / c[..., None]
    return mid, t


def _clip_open(path, s):
    if path.closed:
        return s
    return np.clip(s, 0.0, path.total_length)


def nozzle_xy(path, wheelbase, s, head_u, head_v):
    """World xy of the nozzle for frame reference ``s`` and head offsets."""
    mid, t = frame_pose(path, s, wheelbase)
    n = geometry.left_normal(t)
    u = np.asarray(head_u, dtype=float)[..., None]
    v = np.asarray(head_v, dtype=float)[..., None]
    return mid + u * n + v * t


def head_coordinates(path, wheelbase, s, target_xy):
    """Head offsets ``(u, v)`` that put the nozzle over ``target_xy``."""
    mid, t = frame_pose(path, s, wheelbase)
    n = geometry.left_normal(t)
    rel = np.asarray(target_xy, dtype=float) - mid
    return np.sum(rel * n, axis=-1), np.sum(rel * t, axis=-1)


def lowest_point(top_height, z, layer_height, foot_height):
    """Lowest point of the device feet above ground.

    The feet hang ``foot_height`` below the top of the last completed layer,
    which sits one layer below the nozzle.
    """
    return top_height + z - layer_height - foot_height
