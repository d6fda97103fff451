"""Design files, trace/structure serialization and run outputs.

Design files are JSON with explicit units in every field name. Parsing is
strict: unknown fields are rejected and all problems are reported at once.
Every writer here returns bytes and is deterministic, so two runs on the
same input produce identical files.
"""

from __future__ import annotations

import hashlib
import json
import math
from types import SimpleNamespace
from typing import Annotated, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic import ValidationError as PydanticValidationError

from . import planner
from .controller import ControlRecord, ControlTrace, q9
from .deposition import MaterialModel
from .errors import ClimbPrintError, ParseError, ValidationError
from .geometry import PathSpec
from .kinematics import DeviceConfig, Mode
from .planner import Design, Inclination, PrintMode

SCHEMA_VERSION = 1
CSV_HEADER = "t_s,mode,w_fl,w_fr,w_rl,w_rr,foot_deg,clamp_m,head_u_m,head_v_m,q_mm3s,extruding"
DIGEST_PREFIX = "# plan_digest="

Pair = Annotated[List[float], Field(min_length=2, max_length=2)]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True, frozen=True)


class CircleModel(_Strict):
    center_m: Pair = [0.0, 0.0]
    radius_m: float = Field(gt=0)
    segments: int = Field(default=720, ge=3)


class FootprintModel(_Strict):
    points_m: Optional[List[Pair]] = None
    circle: Optional[CircleModel] = None
    closed: Optional[bool] = None
    thickness_m: float = Field(gt=0)
    top_height_m: Union[float, List[Pair]] = 0.0

    @model_validator(mode="after")
    def _one_shape(self):
        if (self.points_m is None) == (self.circle is None):
            raise ValueError("give exactly one of points_m or circle")
        if self.circle is not None and self.closed is False:
            raise ValueError("a circle footprint is closed")
        if self.points_m is not None and self.closed is None:
            raise ValueError("closed is required with points_m")
        return self


class MaterialFileModel(_Strict):
    extrusion_rate_range_mm3_per_s: Pair
    cure_time_s: float = Field(gt=0)
    bead_width_range_m: Pair


class DeviceFileModel(_Strict):
    wheelbase_m: float = Field(gt=0)
    clamp_range_m: Pair
    head_side_travel_m: float = Field(gt=0)
    head_fb_travel_m: float = Field(gt=0)
    foot_height_m: float = Field(gt=0)
    wheel_radius_m: float = Field(gt=0)
    max_wheel_speed_m_per_s: float = Field(gt=0)
    foot_angle_range_deg: Pair = [0.0, 180.0]


class InclinationRule(_Strict):
    from_layer: int = Field(ge=0)
    profile_deg: Union[float, List[Pair]]


class DesignModel(_Strict):
    footprint: FootprintModel
    n_layers: Optional[int] = Field(default=None, ge=1)
    target_height_m: Optional[float] = Field(default=None, gt=0)
    layer_height_m: float = Field(gt=0)
    mode: Literal["closed_layered", "spiral", "open_boustrophedon"]
    target_bead_width_m: float = Field(gt=0)
    inclination_deg: Union[float, List[InclinationRule]] = 0.0
    correct_deviation: bool = True
    material: MaterialFileModel
    device: DeviceFileModel

    @model_validator(mode="after")
    def _layers(self):
        if (self.n_layers is None) == (self.target_height_m is None):
            raise ValueError("give exactly one of n_layers or target_height_m")
        return self


class OverridesModel(_Strict):
    resample_step_m: Optional[float] = Field(default=None, gt=0)
    dt_s: Optional[float] = Field(default=None, gt=0)


class DesignFileModel(_Strict):
    schema_version: Literal[1]
    design: DesignModel
    overrides: OverridesModel = OverridesModel()


class DesignFile:
    """A parsed design file: the validated design plus optional overrides."""

    def __init__(self, design, resample_step=None, dt=None, digest=""):
        self.design = design
        self.resample_step = resample_step
        self.dt = dt
        self.digest = digest


def _pos_of(data: bytes, offset: int):
    head = data[:offset]
    line = head.count(b"\n") + 1
    col = offset - (head.rfind(b"\n") + 1) + 1
    return line, col


def _load_json(data: bytes):
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        line, col = _pos_of(data, exc.start)
        raise ParseError("design file is not valid UTF-8", line=line, column=col) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, column=exc.colno) from None


def _path_str(loc):
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += ("." if out else "") + str(part)
    return out


def _inclination(value):
    if isinstance(value, (int, float)):
        return Inclination.constant(float(value))
    rules = []
    for r in value:
        prof = r.profile_deg
        if isinstance(prof, (int, float)):
            prof = ((0.0, float(prof)),)
        rules.append((r.from_layer, tuple(prof)))
    return Inclination(tuple(rules))


def _footprint_points(fm):
    if fm.circle is not None:
        c = fm.circle
        th = 2 * np.pi * np.arange(c.segments) / c.segments
        pts = np.column_stack([c.center_m[0] + c.radius_m * np.cos(th), c.center_m[1] + c.radius_m * np.sin(th)])
        return pts, True
    return np.array(fm.points_m, dtype=float), bool(fm.closed)


def design_from_model(dm: DesignModel) -> Design:
    issues = []

    def build(path, fn):
        try:
            return fn()
        except ClimbPrintError as exc:
            issues.append((path, f"{exc.code}: {exc.message}", exc.value))
            return None

    fm = dm.footprint
    pts, closed = _footprint_points(fm)
    top = fm.top_height_m if isinstance(fm.top_height_m, (int, float)) else tuple(fm.top_height_m)
    footprint = build("design.footprint", lambda: PathSpec(pts, closed, fm.thickness_m, top))
    h = dm.layer_height_m
    m = dm.material
    material = build("design.material", lambda: MaterialModel(
        tuple(m.extrusion_rate_range_mm3_per_s), m.cure_time_s, h, tuple(m.bead_width_range_m)))
    d = dm.device
    device = build("design.device", lambda: DeviceConfig(
        wheelbase=d.wheelbase_m, clamp_range=tuple(d.clamp_range_m), head_side_travel=d.head_side_travel_m,
        head_fb_travel=d.head_fb_travel_m, foot_height=d.foot_height_m, wheel_radius=d.wheel_radius_m,
        max_wheel_speed=d.max_wheel_speed_m_per_s, foot_angle_range=tuple(d.foot_angle_range_deg)))
    inclination = _inclination(dm.inclination_deg)
    if dm.n_layers is not None:
        n_layers = dm.n_layers
    else:
        n_layers = int(round(dm.target_height_m / h))
        if n_layers < 1 or abs(n_layers * h - dm.target_height_m) > 1e-9:
            issues.append(("design.target_height_m", "must be a whole number of layer heights", dm.target_height_m))
    if footprint is not None and material is not None and device is not None:
        fields = SimpleNamespace(
            footprint=footprint, n_layers=n_layers, layer_height=h, mode=PrintMode(dm.mode),
            target_bead_width=dm.target_bead_width_m, material=material, device=device,
            inclination=inclination,
        )
        for name, msg, value in planner.design_problems(fields):
            issues.append((f"design.{name}", msg, value))
    elif footprint is not None and dm.mode != "open_boustrophedon" and not footprint.closed:
        issues.append(("design.mode", f"mode {dm.mode} requires a closed footprint", dm.mode))
    if issues:
        raise ValidationError(issues)
    return Design(
        footprint=footprint, n_layers=n_layers, layer_height=h, mode=PrintMode(dm.mode),
        target_bead_width=dm.target_bead_width_m, material=material, device=device,
        inclination=inclination, correct_deviation=dm.correct_deviation,
    )


def parse_design_file(data: bytes) -> DesignFile:
    """Parse and fully validate a design file.

    Raises :class:`ParseError` for malformed input and
    :class:`ValidationError` listing every problem found.
    """
    raw = _load_json(data)
    try:
        model = DesignFileModel.model_validate(raw)
    except PydanticValidationError as exc:
        issues = []
        for err in exc.errors():
            loc = _path_str(err["loc"])
            value = None if err["type"] == "missing" else err.get("input")
            issues.append((loc, err["msg"], value))
        raise ValidationError(issues) from None
    design = design_from_model(model.design)
    canon = json.dumps(model.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return DesignFile(
        design,
        resample_step=model.overrides.resample_step_m,
        dt=model.overrides.dt_s,
        digest=hashlib.sha256(canon.encode()).hexdigest(),
    )


def parse_design(data: bytes) -> Design:
    return parse_design_file(data).design


def _f9(x):
    return f"{q9(x):.9f}"


def write_trace_csv(trace: ControlTrace) -> bytes:
    """Serialize a trace: digest comment, fixed header, 9-decimal rows, LF endings."""
    lines = [DIGEST_PREFIX + trace.plan_digest, CSV_HEADER]
    for r in trace.records:
        w = r.wheel_surface_speeds
        lines.append(",".join([
            _f9(r.t), r.mode.value, _f9(w[0]), _f9(w[1]), _f9(w[2]), _f9(w[3]),
            _f9(r.foot_angle), _f9(r.clamp_gap), _f9(r.head_u), _f9(r.head_v),
            _f9(r.extrusion_rate), "1" if r.extruding else "0",
        ]))
    return ("\n".join(lines) + "\n").encode("ascii")


def read_trace_csv(data: bytes) -> ControlTrace:
    text = data.decode("ascii")
    lines = text.split("\n")
    digest = ""
    i = 0
    if lines and lines[0].startswith(DIGEST_PREFIX):
        digest = lines[0][len(DIGEST_PREFIX):]
        i = 1
    if i >= len(lines) or lines[i] != CSV_HEADER:
        raise ParseError("missing or wrong trace header", line=i + 1, column=1)
    records = []
    for ln, row in enumerate(lines[i + 1:], start=i + 2):
        if not row:
            continue
        cols = row.split(",")
        if len(cols) != 12:
            raise ParseError(f"expected 12 columns, got {len(cols)}", line=ln, column=1)
        try:
            f = [float(c) for c in cols[2:11]]
            records.append(ControlRecord(
                t=float(cols[0]), mode=Mode(cols[1]), wheel_surface_speeds=tuple(f[0:4]),
                foot_angle=f[4], clamp_gap=f[5], head_u=f[6], head_v=f[7], extrusion_rate=f[8],
                extruding=cols[11] == "1",
            ))
        except ValueError as exc:
            raise ParseError(str(exc), line=ln, column=1) from None
    return ControlTrace(tuple(records), plan_digest=digest)


def write_obj(mesh) -> bytes:
    out = [f"v {x:.9f} {y:.9f} {z:.9f}" for x, y, z in mesh.vertices]
    out += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    return ("\n".join(out) + "\n").encode("ascii")


def read_obj(data: bytes):
    verts, faces = [], []
    for line in data.decode("ascii").splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(p) for p in parts[1:4]])
        elif parts[0] == "f":
            faces.append([int(p) - 1 for p in parts[1:4]])
    return np.array(verts), np.array(faces, dtype=np.int64)


def write_layer_svgs(structure) -> dict:
    """One SVG per layer; bead centerlines drawn with stroke width = bead width (1 unit = 1 mm)."""
    if not structure.beads:
        return {}
    allpts = np.vstack([b.center[:, :2] for b in structure.beads]) * 1000.0
    pad = max(b.width for b in structure.beads) * 1000.0
    x0, y0 = allpts.min(axis=0) - pad
    x1, y1 = allpts.max(axis=0) + pad
    w, h = x1 - x0, y1 - y0
    files = {}
    for k in range(structure.n_layers):
        body = []
        for b in structure.layer_beads(k):
            pts = b.center[:, :2] * 1000.0
            if b.closed:
                pts = np.vstack([pts, pts[:1]])
            # svg y points down
            coords = " ".join(f"{x - x0:.3f},{y1 - y:.3f}" for x, y in pts)
            tag = "polygon" if b.closed else "polyline"
            body.append(
                f'  <{tag} points="{coords}" fill="none" stroke="black" '
                f'stroke-width="{b.width * 1000.0:.3f}" stroke-linejoin="round"/>'
            )
        doc = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.3f}mm" height="{h:.3f}mm" '
            f'viewBox="0 0 {w:.3f} {h:.3f}">\n' + "\n".join(body) + "\n</svg>\n"
        )
        files[f"layer_{k:03d}.svg"] = doc.encode("ascii")
    return files


def _clean(x):
    """JSON-safe, rounded copy (9 decimals) of nested floats."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return None
        return q9(x)
    return x


def dump_json(obj) -> bytes:
    return (json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n").encode("ascii")


def plan_to_dict(plan, include_profiles=True):
    layers = []
    for lp in plan.layers:
        entry = {
            "index": lp.index,
            "direction": lp.direction.value,
            "start_m": lp.start,
            "end_m": lp.end,
            "print_time_s": lp.print_time(),
            "volume_mm3": lp.volume(),
            "climb_after_m": lp.climb_after,
            "dwell_before_s": lp.dwell_before,
            "foot_angle_deg": lp.foot_angle,
        }
        if include_profiles:
            entry.update({
                "s_grid_m": lp.s_grid,
                "speed_m_per_s": lp.speed_profile,
                "extrusion_mm3_per_s": lp.extrusion_profile,
                "shift_m": lp.shift_profile,
                "head_fb_m": lp.fb_profile,
            })
        layers.append(entry)
    return {
        "mode": plan.mode.value,
        "plan_digest": plan.digest,
        "n_layers": len(plan.layers),
        "path_length_m": plan.path.total_length if plan.layers else 0.0,
        "total_time_s": plan.total_time,
        "total_volume_mm3": plan.total_volume,
        "layers": layers,
    }


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
