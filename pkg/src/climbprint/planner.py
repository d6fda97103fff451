"""Compile a wall design into a per-layer print plan.

Three procedures are supported:

* closed layered: print a full loop, climb one layer, repeat;
* spiral: one continuous helix on a closed footprint, rising one layer per
  revolution;
* open boustrophedon: back-and-forth passes on an open footprint, with the
  print-head covering the two ends the frame cannot roll over.

All profiles are sampled on nozzle arclength stations and are
piecewise-constant (speed, extrusion) or piecewise-linear (head offsets)
between stations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import enum
import hashlib
import json
import math

import numpy as np

from . import deposition, geometry, kinematics
from .deposition import MaterialModel
from .errors import (
    ChordExceedsDiameter,
    CureTimeInfeasible,
    DesignInvalid,
    FootprintInvalid,
    FootprintTooShort,
    FootprintUnclampable,
    HeadTravelExceeded,
    InclinationTooSteep,
    SpeedLimitExceeded,
    WallTooCurved,
)
from .geometry import ArcLengthPath, PathSpec
from .kinematics import DeviceConfig

# the device needs some time to stop and reverse its wheels between passes
MIN_REVERSAL_TIME = 1.0
WIDTH_MISMATCH_WARN = 0.25


class PrintMode(str, enum.Enum):
    CLOSED_LAYERED = "closed_layered"
    SPIRAL = "spiral"
    OPEN_BOUSTROPHEDON = "open_boustrophedon"


class Direction(str, enum.Enum):
    FORWARD = "forward"
    REVERSE = "reverse"

    @property
    def sign(self):
        return 1.0 if self is Direction.FORWARD else -1.0


@dataclass(frozen=True)
class Inclination:
    """Wall inclination in degrees from vertical, by layer and arclength.

    ``rules`` is a sequence of ``(from_layer, breakpoints)``; the rule with
    the largest ``from_layer`` not above a layer index applies to it.
    Breakpoints are ``((s, deg), ...)`` interpolated linearly in arclength.
    """

    rules: tuple = ((0, ((0.0, 0.0),)),)

    @classmethod
    def constant(cls, deg):
        return cls(((0, ((0.0, float(deg)),)),))

    def __post_init__(self):
        rules = []
        for start, bps in self.rules:
            if np.isscalar(bps):
                bps = ((0.0, float(bps)),)
            bps = tuple((float(s), float(d)) for s, d in bps)
            rules.append((int(start), bps))
        rules.sort(key=lambda r: r[0])
        if not rules or rules[0][0] != 0:
            rules.insert(0, (0, ((0.0, 0.0),)))
        object.__setattr__(self, "rules", tuple(rules))

    def _rule(self, layer):
        chosen = self.rules[0][1]
        for start, bps in self.rules:
            if start <= layer:
                chosen = bps
        return chosen

    def at(self, layer, s):
        bps = self._rule(layer)
        ss = [b[0] for b in bps]
        dd = [b[1] for b in bps]
        return np.interp(s, ss, dd)

    def max_abs(self):
        return max(abs(d) for _, bps in self.rules for _, d in bps)


@dataclass(frozen=True)
class Design:
    footprint: PathSpec
    n_layers: int
    layer_height: float
    mode: PrintMode
    target_bead_width: float
    material: MaterialModel
    device: DeviceConfig
    inclination: Inclination = field(default_factory=Inclination)
    correct_deviation: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mode", PrintMode(self.mode))
        problems = design_problems(self)
        if problems:
            raise DesignInvalid("; ".join(msg for _, msg, _ in problems), value=problems[0][2])


def design_problems(design):
    """Cross-field rule violations as ``(field, message, value)`` triples."""
    out = []
    closed = design.footprint.closed
    if design.n_layers < 1:
        out.append(("n_layers", "must be at least 1", design.n_layers))
    if not design.layer_height > 0:
        out.append(("layer_height_m", "must be positive", design.layer_height))
    if design.mode in (PrintMode.SPIRAL, PrintMode.CLOSED_LAYERED) and not closed:
        out.append(("mode", f"mode {design.mode.value} requires a closed footprint", design.mode.value))
    if design.mode is PrintMode.OPEN_BOUSTROPHEDON and closed:
        out.append(("mode", "mode open_boustrophedon requires an open footprint", design.mode.value))
    if design.mode is PrintMode.SPIRAL and not design.footprint.flat_top:
        out.append(("mode", "spiral mode requires a flat footprint top", design.mode.value))
    if abs(design.material.layer_height - design.layer_height) > 1e-12:
        out.append(("material.layer_height", "must equal the design layer height", design.material.layer_height))
    w_min, w_max = design.material.bead_width_range
    if not w_min <= design.target_bead_width <= w_max:
        out.append(("target_bead_width_m", f"outside material bead width range [{w_min}, {w_max}]", design.target_bead_width))
    if design.inclination.max_abs() >= 90.0:
        out.append(("inclination_deg", "must be below 90 degrees in magnitude", design.inclination.max_abs()))
    return out


@dataclass(frozen=True)
class LayerPlan:
    """Schedule for one layer, sampled on nozzle arclength stations.

    ``s_grid`` is ascending whatever the travel direction. Nozzle arclength
    ``sigma`` maps to device reference ``sigma + s_offset`` while rolling,
    i.e. on ``[roll_start, roll_end]``; outside that range the device is
    parked and the head reaches the path ends. ``shift_profile`` and
    ``fb_profile`` are the side and front-back head offsets.
    """

    index: int
    direction: Direction
    s_grid: np.ndarray
    speed_profile: np.ndarray
    extrusion_profile: np.ndarray
    shift_profile: np.ndarray
    fb_profile: np.ndarray
    climb_after: float
    roll_start: float
    roll_end: float
    s_offset: float = 0.0
    foot_angle: float = 0.0
    dwell_before: float = 0.0
    head_out: bool = False

    @property
    def start(self):
        return float(self.s_grid[0] if self.direction is Direction.FORWARD else self.s_grid[-1])

    @property
    def end(self):
        return float(self.s_grid[-1] if self.direction is Direction.FORWARD else self.s_grid[0])

    def interval(self, sigma):
        """Index of the station interval the nozzle is in, looking along the travel direction."""
        side = "right" if self.direction is Direction.FORWARD else "left"
        i = int(np.searchsorted(self.s_grid, sigma, side=side)) - 1
        return min(max(i, 0), len(self.s_grid) - 2)

    def speed_at(self, sigma):
        return float(self.speed_profile[self.interval(sigma)])

    def extrusion_at(self, sigma):
        return float(self.extrusion_profile[self.interval(sigma)])

    def head_at(self, sigma):
        return (
            float(np.interp(sigma, self.s_grid, self.shift_profile)),
            float(np.interp(sigma, self.s_grid, self.fb_profile)),
        )

    def print_time(self):
        ds = np.diff(self.s_grid)
        return math.fsum(ds / self.speed_profile[:-1])

    def volume(self):
        """Material laid by this layer (mm^3)."""
        ds = np.diff(self.s_grid)
        return math.fsum(self.extrusion_profile[:-1] * ds / self.speed_profile[:-1])


@dataclass(frozen=True)
class PrintPlan:
    mode: PrintMode
    layers: tuple
    path: ArcLengthPath
    thickness: float
    layer_height: float
    start_s: float
    head_out_time: float = 0.0
    total_time: float = 0.0
    total_volume: float = 0.0
    climb_speed: float = 0.0
    cure_time: float = math.inf
    digest: str = ""

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "digest", plan_digest(self))


def _canon(a):
    return [float(x).hex() for x in np.ravel(a)]


def plan_digest(plan):
    body = {
        "mode": PrintMode(plan.mode).value,
        "thickness": float(plan.thickness).hex(),
        "layer_height": float(plan.layer_height).hex(),
        "start_s": float(plan.start_s).hex(),
        "climb_speed": float(plan.climb_speed).hex(),
        "cure_time": float(plan.cure_time).hex(),
        "path_s": _canon(plan.path.s),
        "path_xy": _canon(plan.path.position),
        "layers": [
            {
                "index": lp.index,
                "direction": lp.direction.value,
                "grid": _canon(lp.s_grid),
                "speed": _canon(lp.speed_profile),
                "q": _canon(lp.extrusion_profile),
                "shift": _canon(lp.shift_profile),
                "fb": _canon(lp.fb_profile),
                "misc": _canon([lp.climb_after, lp.roll_start, lp.roll_end, lp.s_offset, lp.foot_angle, lp.dwell_before]),
                "head_out": lp.head_out,
            }
            for lp in plan.layers
        ],
    }
    blob = json.dumps(body, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def deviation_correction(curvature, wheelbase):
    """Side head offset that puts the nozzle back on the path centerline.

    The frame's chord midpoint sits ``chord_sagitta`` toward the center of
    curvature, so the head must move the same distance the other way.
    """
    return -geometry.chord_sagitta(curvature, wheelbase)


def inclination_shift(layer_index, layer_height, inclination):
    """Cumulative side shift (m) of layer ``layer_index`` for a constant inclination (deg).

    Layer 0 sits on the footprint centerline; each later layer moves
    ``layer_height * tan(inclination)`` further.
    """
    if abs(inclination) >= 90.0:
        raise InclinationTooSteep("inclination must be below 90 degrees", value=inclination)
    return layer_index * layer_height * math.tan(math.radians(inclination))


def cumulative_shift(design, layer, s):
    """Inclination shift for ``layer`` at footprint arclength ``s`` (vectorized in s)."""
    s = np.asarray(s, dtype=float)
    h = design.layer_height
    total = np.zeros_like(s)
    for i in range(1, layer + 1):
        total = total + h * np.tan(np.radians(design.inclination.at(i, s)))
    return total


def spiral_shift(design, sigma, perimeter):
    """Inclination shift along a helix, interpolating within each revolution."""
    sigma = np.asarray(sigma, dtype=float)
    rev = sigma / perimeter
    k = np.floor(rev).astype(int)
    frac = rev - k
    s = sigma - k * perimeter
    out = np.zeros_like(sigma)
    h = design.layer_height
    for kk in np.unique(k):
        m = k == kk
        base = cumulative_shift(design, int(kk), s[m])
        step = h * np.tan(np.radians(design.inclination.at(int(kk) + 1, s[m])))
        out[m] = base + frac[m] * step
    return out


@dataclass
class FootprintReport:
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.errors

    def raise_first(self):
        if self.errors:
            raise self.errors[0]


def footprint_check(design):
    """Check the starter wall against the device before anything is planned."""
    report = FootprintReport()
    fp = design.footprint
    dev = design.device
    lowest = fp.min_top_height
    if lowest < dev.foot_height:
        report.errors.append(
            FootprintTooShort(
                f"footprint top {lowest} m is below the device foot height {dev.foot_height} m",
                value=lowest,
            )
        )
    t_min, t_max = dev.clamp_range
    if not t_min <= fp.thickness <= t_max:
        report.errors.append(
            FootprintUnclampable(
                f"footprint thickness {fp.thickness} m outside clamp range [{t_min}, {t_max}] m",
                value=fp.thickness,
            )
        )
    w = design.target_bead_width
    if abs(fp.thickness - w) > WIDTH_MISMATCH_WARN * w:
        report.warnings.append(
            f"footprint thickness {fp.thickness} m differs from target bead width {w} m by more than "
            f"{WIDTH_MISMATCH_WARN:.0%}"
        )
    if design.mode is PrintMode.OPEN_BOUSTROPHEDON and fp.length < dev.wheelbase:
        report.errors.append(FootprintInvalid("open footprint is shorter than the wheelbase", value=fp.length))
    return report


def _check_curvature(kappa, thickness, wheelbase):
    worst = float(np.max(np.abs(kappa))) if len(kappa) else 0.0
    if worst * thickness / 2.0 >= 1.0:
        raise WallTooCurved("inner wall face radius is not positive", value=worst)
    if worst * wheelbase / 2.0 >= 1.0:
        raise WallTooCurved("wheelbase chord does not fit on the curve", value=worst)


def _speeds(design, kappa, v_cure, tilt_deg=0.0):
    """Station speeds and interval extrusion rates."""
    mat = design.material
    h = design.layer_height
    w = design.target_bead_width
    dev = design.device
    v_width = mat.mid_extrusion_rate * deposition.MM3_TO_M3 / (w * h)
    v_wheel = kinematics.max_centerline_speed(kappa, design.footprint.thickness, dev.max_wheel_speed)
    v_wheel = v_wheel * math.cos(math.radians(tilt_deg))
    v = np.minimum(np.minimum(v_width, v_cure), v_wheel)
    v_int = np.minimum(v[:-1], v[1:])
    v_int = np.append(v_int, v_int[-1])
    q = deposition.extrusion_for_width(w, v_int, h)
    q_min = mat.extrusion_rate_range[0]
    low = q < q_min * (1 - 1e-12)
    if np.any(low):
        i = int(np.argmax(low))
        if v_cure <= v_wheel[min(i, len(v_wheel) - 1)] and v_cure < v_width:
            raise CureTimeInfeasible(
                f"cure time {mat.cure_time} s forces speed {v_cure:.3g} m/s, below the minimum extrusion "
                f"rate at bead width {w} m",
                value=mat.cure_time,
            )
        raise SpeedLimitExceeded("wheel speed limit forces extrusion below its minimum", value=float(q[i]))
    return v_int, q


def _check_shift(design, shift, deviation, layer):
    u_max = design.device.head_side_travel
    if np.any(np.abs(deviation) > u_max):
        raise WallTooCurved("deviation correction exceeds head side travel", value=float(np.max(np.abs(deviation))))
    if np.any(np.abs(shift) > u_max):
        worst = float(np.max(np.abs(shift)))
        raise InclinationTooSteep(
            f"layer {layer}: head shift {worst:.6g} m exceeds side travel {u_max} m", value=worst
        )


def _check_overhang(design, n_layers, s):
    half = design.target_bead_width / 2.0
    h = design.layer_height
    for i in range(1, n_layers):
        delta = np.abs(h * np.tan(np.radians(design.inclination.at(i, s))))
        if np.any(delta > half * (1 + 1e-12)):
            raise InclinationTooSteep(
                f"layer {i}: overhang {float(np.max(delta)):.6g} m exceeds half the bead width", value=float(np.max(delta))
            )


def compile_plan(design: Design, step: float | None = None) -> PrintPlan:
    """Turn a design into a validated :class:`PrintPlan`."""
    footprint_check(design).raise_first()
    path = geometry.resample(design.footprint, step)
    L = path.total_length
    dev = design.device
    mat = design.material
    h = design.layer_height
    b = dev.wheelbase
    n = design.n_layers
    _check_curvature(path.curvature, design.footprint.thickness, b)
    _check_overhang(design, n, path.s)
    v_cure = deposition.max_device_speed(mat, L)
    climb_v = dev.max_wheel_speed
    layers = []

    if design.mode is PrintMode.CLOSED_LAYERED:
        kappa = path.curvature
        speed, q = _speeds(design, kappa, v_cure)
        dev_corr = _deviation_profile(design, kappa)
        for k in range(n):
            incl = cumulative_shift(design, k, path.s)
            shift = dev_corr + incl
            _check_shift(design, shift, dev_corr, k)
            layers.append(LayerPlan(
                index=k, direction=Direction.FORWARD, s_grid=path.s, speed_profile=speed,
                extrusion_profile=q, shift_profile=shift, fb_profile=np.zeros_like(shift),
                climb_after=h, roll_start=0.0, roll_end=L, s_offset=k * L,
            ))
        start_s = 0.0

    elif design.mode is PrintMode.SPIRAL:
        tilt = kinematics.spiral_tilt(h, L, closed=True)
        grid = np.concatenate([path.s[:-1] + k * L for k in range(n)] + [[n * L]])
        kappa = np.concatenate([path.curvature[:-1]] * n + [path.curvature[-1:]])
        speed, q = _speeds(design, kappa, v_cure, tilt_deg=tilt)
        dev_corr = _deviation_profile(design, kappa)
        shift = dev_corr + spiral_shift(design, grid, L)
        _check_shift(design, shift, dev_corr, 0)
        layers.append(LayerPlan(
            index=0, direction=Direction.FORWARD, s_grid=grid, speed_profile=speed,
            extrusion_profile=q, shift_profile=shift, fb_profile=np.zeros_like(shift),
            climb_after=0.0, roll_start=0.0, roll_end=n * L, foot_angle=tilt,
        ))
        start_s = 0.0

    else:
        if dev.head_fb_travel < b / 2.0 * (1 - 1e-12):
            raise HeadTravelExceeded(
                "front-back head travel must reach half the wheelbase to print open path ends",
                value=dev.head_fb_travel,
            )
        a, z = b / 2.0, L - b / 2.0
        grid = np.union1d(path.s, [a, z])
        # drop stations that nearly duplicate the inserted phase boundaries
        keep = np.ones(len(grid), dtype=bool)
        for edge in (a, z):
            close = np.abs(grid - edge) < 1e-9
            close[np.argmin(np.abs(grid - edge))] = False
            keep &= ~close
        grid = grid[keep]
        _, _, kappa = geometry.evaluate(path, grid)
        speed, q = _speeds(design, kappa, v_cure)
        dev_corr = _deviation_profile(design, kappa)
        for k in range(n):
            direction = Direction.FORWARD if k % 2 == 0 else Direction.REVERSE
            incl = cumulative_shift(design, k, grid)
            shift = dev_corr + incl
            fb = np.zeros_like(shift)
            for lo_mask, s_ref in ((grid < a, a), (grid > z, z)):
                sig = grid[lo_mask]
                if design.correct_deviation:
                    target = geometry.offset_points(path, sig, incl[lo_mask])
                    u, v = kinematics.head_coordinates(path, b, np.full(len(sig), s_ref), target)
                else:
                    u, v = incl[lo_mask], sig - s_ref
                shift[lo_mask] = u
                fb[lo_mask] = v
            _check_shift(design, shift, dev_corr, k)
            if np.any(np.abs(fb) > dev.head_fb_travel * (1 + 1e-9)):
                raise HeadTravelExceeded("front-back head travel exceeded at path end", value=float(np.max(np.abs(fb))))
            dwell = 0.0
            if k > 0:
                dwell = max(mat.cure_time - h / climb_v, MIN_REVERSAL_TIME)
            layers.append(LayerPlan(
                index=k, direction=direction, s_grid=grid, speed_profile=speed, extrusion_profile=q,
                shift_profile=shift, fb_profile=fb, climb_after=h, roll_start=a, roll_end=z,
                dwell_before=dwell, head_out=(k == 0),
            ))
        start_s = a

    head_out_time = 0.0
    if layers and layers[0].head_out:
        lp = layers[0]
        u0, v0 = lp.head_at(lp.start)
        head_out_time = math.hypot(u0, v0) / lp.speed_at(lp.start)
    total_time = head_out_time + math.fsum(
        lp.print_time() + lp.climb_after / climb_v + lp.dwell_before for lp in layers
    )
    total_volume = math.fsum(lp.volume() for lp in layers)
    return PrintPlan(
        mode=design.mode, layers=layers, path=path, thickness=design.footprint.thickness,
        layer_height=h, start_s=start_s, head_out_time=head_out_time, total_time=total_time,
        total_volume=total_volume, climb_speed=climb_v, cure_time=mat.cure_time,
    )


def _deviation_profile(design, kappa):
    if not design.correct_deviation:
        return np.zeros_like(kappa)
    try:
        return np.array([deviation_correction(k, design.device.wheelbase) for k in kappa])
    except ChordExceedsDiameter as exc:
        raise WallTooCurved("wheelbase chord does not fit on the curve", value=exc.value) from exc


# ``compile`` shadows a builtin; keep it as the public alias the rest of the API uses
compile = compile_plan
