"""Forward simulation of a control trace.

The trace is replayed through :func:`climbprint.controller.step`, the nozzle
is placed with the rigid-frame model, and material is laid wherever the
trace extrudes. Path error therefore comes only from frame geometry and the
commanded head offsets. The report then checks the result against the
design.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from . import controller, deposition, geometry, kinematics, planner
from .deposition import BeadSegment
from .errors import EmptyStructure, SimulationError, TooFewLayers, TraceDesignMismatch
from .kinematics import Mode
from .planner import PrintMode

WIDTH_MERGE_TOL = 1e-6
CLOSE_TOL = 1e-7


@dataclass(frozen=True)
class PrintedStructure:
    beads: tuple = ()
    layer_boundaries: tuple = ()
    final_height: float = 0.0
    layer_height: float = 0.0
    path: object = field(default=None, repr=False, compare=False)
    mode: PrintMode | None = None

    @property
    def n_layers(self):
        return len(self.layer_boundaries)

    def layer_beads(self, k):
        bounds = list(self.layer_boundaries) + [len(self.beads)]
        return self.beads[bounds[k]:bounds[k + 1]]

    @property
    def volume_mm3(self):
        return math.fsum(b.volume for b in self.beads) / deposition.MM3_TO_M3


@dataclass(frozen=True)
class SimReport:
    max_nozzle_path_error: float = 0.0
    layer_height_errors: list = field(default_factory=list)
    coverage_gaps: list = field(default_factory=list)
    volume_balance: float = 0.0
    cure_violations: list = field(default_factory=list)
    collision_events: list = field(default_factory=list)
    deposited_volume: float = 0.0
    final_state: object = field(default=None, compare=False)

    def to_dict(self):
        return {
            "max_nozzle_path_error_m": self.max_nozzle_path_error,
            "layer_height_errors_m": list(self.layer_height_errors),
            "coverage_gaps": [list(g) for g in self.coverage_gaps],
            "volume_balance": self.volume_balance,
            "cure_violations": [list(c) for c in self.cure_violations],
            "collision_events": [list(c) for c in self.collision_events],
            "deposited_volume_mm3": self.deposited_volume,
        }


def _unwrap(sigma, period):
    if len(sigma) == 0:
        return sigma
    return np.unwrap(sigma * (2 * np.pi / period)) * (period / (2 * np.pi))


def _runs(mask):
    """(start, stop) index pairs of consecutive True runs."""
    out = []
    i, n = 0, len(mask)
    while i < n:
        if mask[i]:
            j = i
            while j < n and mask[j]:
                j += 1
            out.append((i, j))
            i = j
        else:
            i += 1
    return out


def _commanded_width(rec, h):
    v = abs(sum(rec.wheel_surface_speeds)) / 4.0
    c, _ = kinematics.foot_cos_sin(rec.foot_angle)
    v = v * c
    if v <= 0:
        # head-only motion: width is set by the measured travel instead
        return None
    return deposition.bead_width(rec.extrusion_rate, v, h)


def simulate(trace, design, plan=None, step=None, tracking_error=None):
    """Replay ``trace`` on ``design``; returns ``(PrintedStructure, SimReport)``.

    ``tracking_error`` is an optional hook ``f(t, s) -> metres`` adding a
    lateral nozzle error, standing in for imperfect path tracking. It is off
    by default.
    """
    records = trace.records
    if not records:
        return PrintedStructure(), SimReport()
    if plan is None:
        plan = planner.compile_plan(design, step)
    if trace.plan_digest and trace.plan_digest != plan.digest:
        raise TraceDesignMismatch("trace was not generated from this design", value=trace.plan_digest[:12])
    problems = trace.problems()
    if problems:
        raise SimulationError("malformed trace: " + "; ".join(problems))

    dev = design.device
    h = design.layer_height
    path = plan.path
    L = path.total_length
    fp = design.footprint
    states = controller.replay(trace, controller.initial_state(plan), dev)
    final_state = states[-1]

    n = len(records)
    t = np.array([r.t for r in records])
    s = np.array([st.s for st in states])
    z = np.array([st.z for st in states])
    u = np.array([st.head_u for st in states])
    v = np.array([st.head_v for st in states])
    on = np.array([r.extruding for r in records], dtype=bool)
    if tracking_error is not None:
        u = u + np.array([tracking_error(tt, ss) for tt, ss in zip(t, s)])

    # layer index: increments once a climb finishes
    layer = np.zeros(n, dtype=int)
    k = 0
    for i, r in enumerate(records):
        if i > 0 and records[i - 1].mode is Mode.CLIMBING and r.mode is not Mode.CLIMBING:
            k += 1
        layer[i] = k

    has_layers = bool(plan.layers)
    if has_layers:
        xy = kinematics.nozzle_xy(path, dev.wheelbase, s, u, v)
        sig, dist = geometry.project(path, xy)
        top = fp.height_at(sig)
    else:
        xy = np.zeros((n, 2))
        sig = dist = top = np.zeros(n)
    world_z = top + z

    vols = deposition.interval_volumes(records)
    beads = []
    boundaries = []
    touched = np.zeros(n, dtype=bool)  # records on a deposited polyline
    for a, b in _runs(on[:-1]):
        # split the extruding run at layer changes and width changes
        pieces = []
        cur = [a]
        prev_w = None
        for i in range(a, b):
            if np.linalg.norm(xy[i + 1] - xy[i]) < 1e-12:
                raise SimulationError("extrusion while the nozzle is stationary", value=float(t[i]))
            w = _commanded_width(records[i], h)
            new_layer = i > a and layer[i] != layer[i - 1]
            if w is None or prev_w is None:
                new_width = (w is None) != (prev_w is None) and i > a
            else:
                new_width = abs(w - prev_w) > WIDTH_MERGE_TOL * prev_w
            if new_layer or new_width:
                pieces.append((cur[0], i))
                cur = [i]
            prev_w = w
        pieces.append((cur[0], b))
        for i0, i1 in pieces:
            idx = np.arange(i0, i1 + 1)
            touched[idx] = True
            pts = xy[idx]
            seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
            vol_m3 = math.fsum(vols[i0:i1]) * deposition.MM3_TO_M3
            closed = bool(
                plan.mode is PrintMode.CLOSED_LAYERED
                and len(idx) > 3
                and np.linalg.norm(pts[0] - pts[-1]) < CLOSE_TOL
            )
            length = math.fsum(seg)
            width = vol_m3 / (h * length)
            center = np.column_stack([pts, world_z[idx] - h / 2.0])
            times = t[idx]
            sg = sig[idx]
            if fp.closed:
                sg = _unwrap(sg, L)
            if closed:
                center = center[:-1]
                times = times[:-1]
            lay = int(layer[i0])
            if not boundaries or boundaries[-1][0] != lay:
                boundaries.append((lay, len(beads)))
            beads.append(BeadSegment(
                s0=float(np.min(sg)), s1=float(np.max(sg)), width=width, height=h,
                center=center, times=times, layer=lay, closed=closed,
            ))

    final_height = float(np.max(z[touched])) if beads else 0.0
    structure = PrintedStructure(
        beads=tuple(beads),
        layer_boundaries=tuple(i for _, i in boundaries),
        final_height=final_height,
        layer_height=h,
        path=path,
        mode=plan.mode,
    )

    dep = deposition.deposited_volume(records)
    bead_vol = structure.volume_mm3
    balance = abs(bead_vol - dep) / dep if dep > 0 else 0.0
    if not beads:
        return structure, SimReport(deposited_volume=dep, final_state=final_state)

    # nozzle error against the intended (possibly inclined) curve
    mask = touched
    if plan.mode is PrintMode.SPIRAL:
        sig_u = _unwrap(sig[mask], L)
        sig_u = sig_u - L * np.floor(sig_u[0] / L + 0.5)
        intended = planner.spiral_shift(design, np.clip(sig_u, 0.0, None), L)
    else:
        intended = np.empty(int(mask.sum()))
        lay_m = layer[mask]
        sig_m = sig[mask]
        for kk in np.unique(lay_m):
            sel = lay_m == kk
            intended[sel] = planner.cumulative_shift(design, int(kk), sig_m[sel])
    errors = np.abs(dist[mask] - intended)
    max_err = float(np.max(errors))

    spacing = float(np.max(np.diff(path.s)))
    height_errors = _layer_height_errors(structure, plan, z, layer, touched, sig, L)
    gaps = _coverage_gaps(structure, L, fp.closed, spacing, plan.mode)
    cure = _cure_violations(structure, plan, design.material.cure_time, L)
    collisions = _collisions(records, s, z, fp, dev, h, L, plan)
    report = SimReport(
        max_nozzle_path_error=max_err,
        layer_height_errors=height_errors,
        coverage_gaps=gaps,
        volume_balance=balance,
        cure_violations=cure,
        collision_events=collisions,
        deposited_volume=dep,
        final_state=final_state,
    )
    return structure, report


def _layer_height_errors(structure, plan, z, layer, touched, sig, L):
    h = structure.layer_height
    if plan.mode is PrintMode.SPIRAL:
        zz = z[touched]
        su = _unwrap(sig[touched], L)
        su = su - su[0]
        out = [float(zz[0] - h)]
        revs = int(np.floor(su[-1] / L + 1e-9))
        for r in range(1, revs + 1):
            out.append(float(np.interp(r * L, su, zz) - np.interp((r - 1) * L, su, zz) - h))
        return out
    levels = []
    for kk in sorted(set(layer[touched].tolist())):
        levels.append(float(np.median(z[touched & (layer == kk)])))
    out = [levels[0] - h] if levels else []
    out += [b - a - h for a, b in zip(levels, levels[1:])]
    return out


def _coverage_gaps(structure, L, closed, threshold, mode):
    gaps = []
    if mode is PrintMode.SPIRAL:
        groups = [(0, structure.beads)]
    else:
        groups = [(k, structure.layer_beads(k)) for k in range(structure.n_layers)]
    for k, beads in groups:
        iv = []
        for b in beads:
            lo, hi = b.s0, b.s1
            if closed:
                if hi - lo >= L - threshold:
                    iv.append((0.0, L))
                    continue
                lo_m = lo % L
                hi_m = lo_m + (hi - lo)
                if hi_m > L:
                    iv += [(lo_m, L), (0.0, hi_m - L)]
                else:
                    iv.append((lo_m, hi_m))
            else:
                iv.append((lo, hi))
        iv.sort()
        cursor = 0.0
        for lo, hi in iv:
            if lo - cursor > threshold:
                gaps.append((k, cursor, lo))
            cursor = max(cursor, hi)
        if L - cursor > threshold:
            gaps.append((k, cursor, L))
    return gaps


def _cure_violations(structure, plan, cure_time, L):
    path = structure.path
    out = []

    def layer_samples(beads):
        ss, tt = [], []
        for b in beads:
            s_b, _ = geometry.project(path, b.center[:, :2])
            if path.closed:
                s_b = _unwrap(s_b, L)
            ss.append(s_b)
            tt.append(b.times)
        if not ss:
            return np.zeros(0), np.zeros(0)
        s_all = np.concatenate(ss)
        t_all = np.concatenate(tt)
        return s_all, t_all

    def record(stations, revisit):
        bad = revisit < cure_time * (1 - 1e-9)
        for a, b in _runs(bad):
            j = a + int(np.argmin(revisit[a:b]))
            out.append((float(stations[j]), float(revisit[j])))

    if plan.mode is PrintMode.SPIRAL:
        s_all, t_all = layer_samples(structure.beads)
        if len(s_all) < 2:
            return out
        s_all = s_all - L * np.floor(s_all[0] / L + 0.5)
        order = np.argsort(s_all)
        s_all, t_all = s_all[order], t_all[order]
        st = path.s[path.s + L <= s_all[-1]]
        st = st[st >= s_all[0]]
        if len(st):
            record(st, np.interp(st + L, s_all, t_all) - np.interp(st, s_all, t_all))
        return out

    prev = None
    for k in range(structure.n_layers):
        s_all, t_all = layer_samples(structure.layer_beads(k))
        if len(s_all) < 2:
            prev = None
            continue
        if path.closed:
            s_all = s_all - L * np.floor(s_all[0] / L + 0.5)
            s_all = np.mod(s_all, L)
            # the seam sample belongs to the end of the loop
            if t_all[0] < t_all[-1] and s_all[-1] < L / 2:
                s_all[-1] = L
        order = np.argsort(s_all, kind="stable")
        cur = (s_all[order], t_all[order])
        if prev is not None:
            lo = max(prev[0][0], cur[0][0])
            hi = min(prev[0][-1], cur[0][-1])
            st = path.s[(path.s >= lo) & (path.s <= hi)]
            if len(st):
                record(st, np.interp(st, *cur) - np.interp(st, *prev))
        prev = cur
    return out


def _collisions(records, s, z, fp, dev, h, L, plan):
    if not plan.layers:
        return []
    s_dev = np.mod(s, L) if fp.closed else np.clip(s, 0, L)
    low = kinematics.lowest_point(fp.height_at(s_dev), z, h, dev.foot_height)
    out = []
    for a, _ in _runs(low < 0):
        out.append((float(records[a].t), float(low[a])))
    return out


def measure_inclination(structure, stations=None):
    """Wall inclination (deg from vertical) between consecutive layers.

    Each layer's bead centerline is projected onto the footprint; the change
    in signed offset between layers over their height difference gives the
    angle. Returns ``(stations, angles)`` with ``angles`` shaped
    ``(n_layers - 1, len(stations))``.
    """
    if structure.n_layers < 2:
        raise TooFewLayers("need at least two layers", value=structure.n_layers)
    path = structure.path
    L = path.total_length
    if stations is None:
        stations = path.s[:-1] if path.closed else path.s
    stations = np.asarray(stations, dtype=float)
    offsets, heights = [], []
    for k in range(structure.n_layers):
        beads = structure.layer_beads(k)
        pts = np.vstack([b.center for b in beads])
        sg, d = geometry.project(path, pts[:, :2])
        order = np.argsort(sg, kind="stable")
        sg, d = sg[order], d[order]
        if path.closed:
            sg = np.concatenate([sg - L, sg, sg + L])
            d = np.concatenate([d, d, d])
        offsets.append(np.interp(stations, sg, d))
        heights.append(float(np.median(pts[:, 2])))
    offsets = np.array(offsets)
    dz = np.diff(heights)[:, None]
    angles = np.degrees(np.arctan(np.diff(offsets, axis=0) / dz))
    return stations, angles


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray
    faces: np.ndarray

    def volume(self):
        v0 = self.vertices[self.faces[:, 0]]
        v1 = self.vertices[self.faces[:, 1]]
        v2 = self.vertices[self.faces[:, 2]]
        return float(np.sum(np.einsum("ij,ij->i", v0, np.cross(v1, v2))) / 6.0)


def _bead_mesh(bead, base):
    c = bead.center
    m = len(c)
    xy = c[:, :2]
    if bead.closed:
        e = np.roll(xy, -1, axis=0) - xy
    else:
        e = np.diff(xy, axis=0)
    e = e / np.linalg.norm(e, axis=1, keepdims=True)
    if bead.closed:
        into = np.roll(e, 1, axis=0)
        out = e
    else:
        into = np.vstack([e[:1], e])
        out = np.vstack([e, e[-1:]])
    bis = into + out
    bis = bis / np.linalg.norm(bis, axis=1, keepdims=True)
    nrm = geometry.left_normal(bis)
    scale = 1.0 / np.einsum("ij,ij->i", nrm, geometry.left_normal(out))
    off = nrm * (bead.width / 2.0 * scale)[:, None]
    zt = c[:, 2] + bead.height / 2.0
    zb = c[:, 2] - bead.height / 2.0
    verts = np.empty((m, 4, 3))
    verts[:, 0] = np.column_stack([xy + off, zt])
    verts[:, 1] = np.column_stack([xy - off, zt])
    verts[:, 2] = np.column_stack([xy - off, zb])
    verts[:, 3] = np.column_stack([xy + off, zb])
    verts = verts.reshape(-1, 3)

    faces = []
    n_seg = m if bead.closed else m - 1
    for j in range(n_seg):
        a = base + 4 * j
        b = base + 4 * ((j + 1) % m)
        for q in range(4):
            q1 = (q + 1) % 4
            faces.append((a + q, a + q1, b + q1))
            faces.append((a + q, b + q1, b + q))
    if not bead.closed:
        a = base
        faces += [(a, a + 3, a + 2), (a, a + 2, a + 1)]
        b = base + 4 * (m - 1)
        faces += [(b, b + 1, b + 2), (b, b + 2, b + 3)]
    return verts, faces


def export_obj(structure):
    """Rectangular-section swept mesh, one watertight shell per bead."""
    if not structure.beads:
        raise EmptyStructure("nothing was deposited")
    verts, faces = [], []
    base = 0
    for bead in structure.beads:
        v, f = _bead_mesh(bead, base)
        verts.append(v)
        faces += f
        base += len(v)
    return Mesh(vertices=np.vstack(verts), faces=np.array(faces, dtype=np.int64))
