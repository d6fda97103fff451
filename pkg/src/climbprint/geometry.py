"""Arclength-parameterized planar curves.

Footprints come in as polylines. Interior vertices whose turning angle is
small are treated as samples of a smooth curve and are interpolated with
blended three-point circles, so a dense polygon of a circle resamples onto
the circle itself. Sharper vertices are kept as corners with straight edges
between them.

Conventions: positive curvature turns left relative to the travel direction,
and the left normal is the tangent rotated by +90 degrees.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    ChordExceedsDiameter,
    DegeneratePath,
    OffsetExceedsCurvatureRadius,
    OutOfRange,
    SelfIntersection,
)

# vertices turning more than this are corners, not samples of a smooth curve
CORNER_ANGLE = math.radians(30.0)
INTERSECT_TOL = 1e-9
RANGE_TOL = 1e-9
# interpolate with cubics only where both tangents are within ~10 deg of the chord
HERMITE_COS = math.cos(math.radians(10.0))


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def left_normal(v):
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def circumcurvature(a, b, c):
    """Signed curvature of the circle through ``a``, ``b``, ``c`` (in order).

    Works row-wise on ``(n, 2)`` arrays. Collinear triples give 0.
    """
    a, b, c = (np.asarray(p, dtype=float) for p in (a, b, c))
    ab = b - a
    bc = c - b
    ac = c - a
    cross = ab[..., 0] * bc[..., 1] - ab[..., 1] * bc[..., 0]
    denom = np.linalg.norm(ab, axis=-1) * np.linalg.norm(bc, axis=-1) * np.linalg.norm(ac, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(denom > 0, 2.0 * cross / np.where(denom > 0, denom, 1.0), 0.0)
    return k


def _dedupe(points, closed):
    pts = [points[0]]
    for p in points[1:]:
        if np.linalg.norm(p - pts[-1]) > 1e-12:
            pts.append(p)
    if closed and len(pts) > 1 and np.linalg.norm(pts[-1] - pts[0]) <= 1e-12:
        pts.pop()
    return np.array(pts)


def _segment_distance(p1, p2, q1, q2):
    """Minimum distance between segment p1p2 and each segment q1[i]q2[i]."""

    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    def point_seg(p, a, b):
        ab = b - a
        denom = np.einsum("...i,...i->...", ab, ab)
        t = np.clip(np.einsum("...i,...i->...", p - a, ab) / np.where(denom > 0, denom, 1.0), 0.0, 1.0)
        return np.linalg.norm(a + t[..., None] * ab - p, axis=-1)

    d1 = orient(p1, p2, q1)
    d2 = orient(p1, p2, q2)
    d3 = orient(q1, q2, p1)
    d4 = orient(q1, q2, p2)
    crossing = (np.sign(d1) * np.sign(d2) < 0) & (np.sign(d3) * np.sign(d4) < 0)
    p1b = np.broadcast_to(p1, q1.shape)
    p2b = np.broadcast_to(p2, q1.shape)
    dist = np.minimum.reduce([
        point_seg(q1, p1b, p2b),
        point_seg(q2, p1b, p2b),
        point_seg(p1b, q1, q2),
        point_seg(p2b, q1, q2),
    ])
    return np.where(crossing, 0.0, dist)


def find_self_intersection(points, closed, tol=INTERSECT_TOL):
    """Return the first intersecting non-adjacent segment pair ``(i, j)`` or None."""
    pts = np.asarray(points, dtype=float)
    if closed:
        a, b = pts, np.roll(pts, -1, axis=0)
    else:
        a, b = pts[:-1], pts[1:]
    n = len(a)
    # adjacent segments only meet at their shared vertex unless the path folds back
    u = b - a
    u = u / np.linalg.norm(u, axis=1, keepdims=True)
    nxt = np.arange(1, n + 1) % n if closed else np.arange(1, n)
    cur = np.arange(n) if closed else np.arange(n - 1)
    fold = (np.einsum("ij,ij->i", u[cur], u[nxt]) < 0) & (
        np.abs(u[cur, 0] * u[nxt, 1] - u[cur, 1] * u[nxt, 0]) <= tol
    )
    if np.any(fold):
        k = int(np.argmax(fold))
        return int(cur[k]), int(nxt[k])
    lo = np.minimum(a, b) - tol
    hi = np.maximum(a, b) + tol
    for i in range(n - 2):
        j = np.arange(i + 2, n)
        if closed and i == 0:
            j = j[j != n - 1]
        if len(j) == 0:
            continue
        overlap = np.all((lo[j] <= hi[i]) & (hi[j] >= lo[i]), axis=1)
        j = j[overlap]
        if len(j) == 0:
            continue
        d = _segment_distance(a[i], b[i], a[j], b[j])
        hit = np.nonzero(d <= tol)[0]
        if len(hit):
            return i, int(j[hit[0]])
    return None


def polyline_length(points, closed):
    pts = np.asarray(points, dtype=float)
    if closed:
        pts = np.vstack([pts, pts[:1]])
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


@dataclass(frozen=True)
class PathSpec:
    """A footprint centerline with wall thickness and top-surface heights.

    ``top_height`` is a breakpoint list ``((s, z), ...)`` interpolated
    linearly over arclength; a plain number means a flat top.
    """

    points: np.ndarray
    closed: bool
    thickness: float
    top_height: tuple = 0.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DegeneratePath("points must be an (n, 2) array", value=pts.shape)
        if not np.all(np.isfinite(pts)):
            raise DegeneratePath("points must be finite")
        pts = _dedupe(pts, self.closed)
        need = 3 if self.closed else 2
        if len(pts) < need:
            raise DegeneratePath(f"need at least {need} distinct points", value=len(pts))
        length = polyline_length(pts, self.closed)
        if length <= 0:
            raise DegeneratePath("path has zero length", value=length)
        if not self.thickness > 0:
            raise DegeneratePath("thickness must be positive", value=self.thickness)
        hit = find_self_intersection(pts, self.closed)
        if hit is not None:
            raise SelfIntersection(f"segments {hit[0]} and {hit[1]} intersect", value=hit)
        object.__setattr__(self, "points", _readonly(pts))

        th = self.top_height
        if np.isscalar(th):
            th = ((0.0, float(th)), (length, float(th)))
        th = tuple((float(s), float(z)) for s, z in th)
        if len(th) < 1:
            raise DegeneratePath("top_height needs at least one breakpoint")
        ss = [s for s, _ in th]
        if any(b <= a for a, b in zip(ss, ss[1:])):
            raise DegeneratePath("top_height breakpoints must be strictly increasing", value=ss)
        if len(th) == 1:
            th = ((0.0, th[0][1]), (length, th[0][1]))
            ss = [0.0, length]
        if abs(ss[0]) > 1e-9 or ss[-1] < length * (1 - 1e-6):
            raise DegeneratePath(
                "top_height must cover the whole path [0, length]", value=(ss[0], ss[-1], length)
            )
        if self.closed and abs(th[0][1] - th[-1][1]) > 1e-9:
            raise DegeneratePath("closed path top_height must match at both ends", value=(th[0][1], th[-1][1]))
        object.__setattr__(self, "top_height", th)

    @property
    def length(self):
        return polyline_length(self.points, self.closed)

    def height_at(self, s):
        ss, zz = zip(*self.top_height)
        return np.interp(s, ss, zz)

    @property
    def min_top_height(self):
        return min(z for _, z in self.top_height)

    @property
    def flat_top(self):
        zs = [z for _, z in self.top_height]
        return max(zs) - min(zs) <= 1e-12


@dataclass(frozen=True)
class ArcLengthPath:
    s: np.ndarray
    position: np.ndarray
    tangent: np.ndarray
    curvature: np.ndarray
    closed: bool
    _tree: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for name in ("s", "position", "tangent", "curvature"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        object.__setattr__(self, "_tree", cKDTree(self.position))

    @property
    def total_length(self):
        return float(self.s[-1])

    def __len__(self):
        return len(self.s)


def _vertex_circles(pts, closed):
    """Curvature of the circle through each vertex and its neighbours, or NaN for corners/ends."""
    n = len(pts)
    kappa = np.full(n, np.nan)
    idx = range(n) if closed else range(1, n - 1)
    for i in idx:
        a, b, c = pts[i - 1], pts[i], pts[(i + 1) % n]
        u, v = b - a, c - b
        turn = math.atan2(u[0] * v[1] - u[1] * v[0], u @ v)
        if abs(turn) <= CORNER_ANGLE:
            kappa[i] = circumcurvature(a, b, c)
    return kappa


def _arc_point(a, b, kappa, u):
    """Point at fraction ``u`` of the arc with signed curvature ``kappa`` from a to b."""
    chord = b - a
    c = np.linalg.norm(chord)
    d = chord / c
    x = np.clip(kappa * c / 2.0, -1.0, 1.0)
    phi = 2.0 * math.asin(x)
    u = np.asarray(u, dtype=float)
    if abs(phi) < 1e-12:
        length = u * c
    else:
        length = c * np.sin(u * phi / 2.0) / math.sin(phi / 2.0)
    ang = (u - 1.0) * phi / 2.0
    cos, sin = np.cos(ang), np.sin(ang)
    dirs = np.stack([d[0] * cos - d[1] * sin, d[0] * sin + d[1] * cos], axis=-1)
    return a + length[..., None] * dirs


def _edge_points(pts, kappa, closed, i, u):
    n = len(pts)
    a, b = pts[i], pts[(i + 1) % n]
    k0, k1 = kappa[i], kappa[(i + 1) % n]
    if np.isnan(k0) and np.isnan(k1):
        u = np.asarray(u, dtype=float)
        return a + u[..., None] * (b - a)
    if np.isnan(k0):
        return _arc_point(a, b, k1, u)
    if np.isnan(k1):
        return _arc_point(a, b, k0, u)
    w = np.cos(np.pi * np.asarray(u) / 2.0) ** 2
    return w[..., None] * _arc_point(a, b, k0, u) + (1.0 - w[..., None]) * _arc_point(a, b, k1, u)


def default_step(length):
    return min(0.01, length / 200.0)


def resample(spec: PathSpec, step: float | None = None) -> ArcLengthPath:
    """Sample ``spec`` at (nearly) uniform arclength ``step``.

    Corners are always kept as samples; each smooth run between corners gets
    its own uniform spacing. The reported arclength ``s`` is the cumulative
    chord length between samples, so it agrees exactly with the sample
    polyline.
    """
    pts = np.asarray(spec.points, dtype=float)
    total = spec.length
    if step is None:
        step = default_step(total)
    if not step > 0 or step > total / 4.0 + 1e-12:
        raise DegeneratePath("step must satisfy 0 < step <= length/4", value=step)
    closed = spec.closed
    n = len(pts)
    kappa = _vertex_circles(pts, closed)
    n_edges = n if closed else n - 1

    # per-edge lookup table u -> interpolant arclength
    tables = []
    for i in range(n_edges):
        ell = np.linalg.norm(pts[(i + 1) % n] - pts[i])
        k = max(8, int(math.ceil(4.0 * ell / step)))
        u = np.linspace(0.0, 1.0, k + 1)
        xy = _edge_points(pts, kappa, closed, i, u)
        cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(xy, axis=0), axis=1))])
        tables.append((u, cum))

    # corners split the path into runs that are sampled independently
    if closed:
        # vertex 0 always starts a run so that s = 0 sits on the first point
        breaks = sorted({0} | {i for i in range(n) if np.isnan(kappa[i])})
        runs = [list(range(a, b)) for a, b in zip(breaks, breaks[1:] + [n])]
    else:
        breaks = [i for i in range(1, n - 1) if np.isnan(kappa[i])]
        edges = list(range(n_edges))
        runs, cur = [], []
        for e in edges:
            if e in breaks and cur:
                runs.append(cur)
                cur = []
            cur.append(e)
        runs.append(cur)

    samples = []
    for run in runs:
        lengths = np.array([tables[e][1][-1] for e in run])
        starts = np.concatenate([[0.0], np.cumsum(lengths)])
        run_len = starts[-1]
        m = max(1, int(round(run_len / step)))
        targets = np.linspace(0.0, run_len, m + 1)[:-1]
        which = np.clip(np.searchsorted(starts, targets, side="right") - 1, 0, len(run) - 1)
        for e_pos, e in enumerate(run):
            local = targets[which == e_pos] - starts[e_pos]
            if len(local) == 0:
                continue
            u_tab, cum = tables[e]
            u = np.interp(local, cum, u_tab)
            samples.append(_edge_points(pts, kappa, closed, e, u))
    pos = np.vstack(samples)
    if closed:
        pos = np.vstack([pos, pos[:1]])
    else:
        pos = np.vstack([pos, pts[-1:]])
        pos[0] = pts[0]

    seg = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])

    N = len(pos)
    tangent = np.empty_like(pos)
    curv = np.zeros(N)
    if closed:
        prev = np.vstack([pos[-2:-1], pos[:-2]])
        nxt = pos[1:]
        core = pos[:-1]
        tangent[:-1] = nxt - prev
        tangent[-1] = tangent[0]
        curv[:-1] = circumcurvature(prev, core, nxt)
        curv[-1] = curv[0]
    else:
        tangent[1:-1] = pos[2:] - pos[:-2]
        tangent[0] = pos[1] - pos[0]
        tangent[-1] = pos[-1] - pos[-2]
        if N > 2:
            curv[1:-1] = circumcurvature(pos[:-2], pos[1:-1], pos[2:])
            curv[0] = curv[1]
            curv[-1] = curv[-2]
    tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
    return ArcLengthPath(s=s, position=pos, tangent=tangent, curvature=curv, closed=closed)


def _wrap(path, s):
    s = np.asarray(s, dtype=float)
    L = path.total_length
    if path.closed:
        return np.mod(s, L)
    bad = (s < -RANGE_TOL) | (s > L + RANGE_TOL)
    if np.any(bad):
        raise OutOfRange(f"arclength outside [0, {L}]", value=float(np.atleast_1d(s)[np.argmax(np.atleast_1d(bad))]))
    return np.clip(s, 0.0, L)


def _hermite(path, i, f):
    """Cubic Hermite position and derivative direction on sample interval ``i``.

    Falls back to the straight chord where a tangent is far from the chord,
    which is the case next to corners.
    """
    p0, p1 = path.position[i], path.position[i + 1]
    t0, t1 = path.tangent[i], path.tangent[i + 1]
    d = (path.s[i + 1] - path.s[i])[..., None]
    chord = (p1 - p0) / d
    smooth = (np.sum(t0 * chord, axis=-1) > HERMITE_COS) & (np.sum(t1 * chord, axis=-1) > HERMITE_COS)
    fv = f[..., None]
    f2, f3 = fv * fv, fv * fv * fv
    pos = (2 * f3 - 3 * f2 + 1) * p0 + (f3 - 2 * f2 + fv) * d * t0 + (-2 * f3 + 3 * f2) * p1 + (f3 - f2) * d * t1
    der = (6 * f2 - 6 * fv) * p0 / d + (3 * f2 - 4 * fv + 1) * t0 + (6 * fv - 6 * f2) * p1 / d + (3 * f2 - 2 * fv) * t1
    lin = p0 + fv * (p1 - p0)
    lin_t = t0 + fv * (t1 - t0)
    sm = smooth[..., None]
    pos = np.where(sm, pos, lin)
    der = np.where(sm, der, lin_t)
    der = der / np.linalg.norm(der, axis=-1, keepdims=True)
    return pos, der


def _interval(path, s):
    i = np.clip(np.searchsorted(path.s, s, side="right") - 1, 0, len(path.s) - 2)
    s0 = path.s[i]
    return i, (s - s0) / (path.s[i + 1] - s0)


def evaluate(path: ArcLengthPath, s):
    """Vectorized :func:`point_at`: positions, unit tangents and curvatures at ``s``."""
    s = _wrap(path, s)
    i, f = _interval(path, s)
    pos, tan = _hermite(path, i, f)
    k = path.curvature[i] + f * (path.curvature[i + 1] - path.curvature[i])
    return pos, tan, k


def point_at(path: ArcLengthPath, s: float):
    """Position, unit tangent and curvature at arclength ``s``.

    Closed paths take ``s`` modulo the total length; open paths raise
    :class:`OutOfRange` outside ``[0, L]``.
    """
    pos, tan, k = evaluate(path, np.array([s]))
    return pos[0], tan[0], float(k[0])


def offset_point(path: ArcLengthPath, s: float, d: float):
    pos, tan, k = point_at(path, s)
    if abs(d * k) >= 1.0:
        raise OffsetExceedsCurvatureRadius("offset reaches the local center of curvature", value=d)
    return pos + d * left_normal(tan)


def offset_points(path, s, d):
    pos, tan, k = evaluate(path, s)
    d = np.broadcast_to(np.asarray(d, dtype=float), np.shape(k))
    if np.any(np.abs(d * k) >= 1.0):
        raise OffsetExceedsCurvatureRadius("offset reaches the local center of curvature", value=float(np.max(np.abs(d))))
    return pos + d[..., None] * left_normal(tan)


def chord_sagitta(curvature: float, chord: float) -> float:
    """Distance from the midpoint of a chord to its arc.

    Signed toward the center of curvature, i.e. it has the sign of
    ``curvature`` in left-normal coordinates.
    """
    x = abs(curvature) * chord / 2.0
    if x >= 1.0:
        raise ChordExceedsDiameter("chord does not fit on the circle", value=chord)
    # R - sqrt(R^2 - c^2/4), rearranged to stay accurate as curvature -> 0
    return curvature * chord * chord / 4.0 / (1.0 + math.sqrt(1.0 - x * x))


def project(path: ArcLengthPath, points):
    """Closest-point projection onto the sample polyline.

    Returns ``(s, d)``: arclength of the foot point and signed left-normal
    distance.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    _, idx = path._tree.query(pts)
    n = len(path.s)
    best_s = np.empty(len(pts))
    best_d = np.full(len(pts), np.inf)
    best_sd = np.empty(len(pts))
    for off in (-1, 0):
        i = idx + off
        if path.closed:
            i = np.mod(i, n - 1)
        else:
            i = np.clip(i, 0, n - 2)
        a = path.position[i]
        b = path.position[i + 1]
        ab = b - a
        seg2 = np.einsum("ij,ij->i", ab, ab)
        t = np.clip(np.einsum("ij,ij->i", pts - a, ab) / seg2, 0.0, 1.0)
        foot = a + t[:, None] * ab
        rel = pts - foot
        dist = np.linalg.norm(rel, axis=1)
        tan = ab / np.sqrt(seg2)[:, None]
        cross = tan[:, 0] * rel[:, 1] - tan[:, 1] * rel[:, 0]
        better = dist < best_d - 1e-15
        best_d = np.where(better, dist, best_d)
        best_s = np.where(better, path.s[i] + t * np.sqrt(seg2), best_s)
        best_sd = np.where(better, np.where(cross >= 0, dist, -dist), best_sd)
    # Newton refinement onto the interpolated curve
    for _ in range(3):
        s_in = best_s if not path.closed else np.mod(best_s, path.total_length)
        i, f = _interval(path, s_in)
        foot, tan = _hermite(path, i, f)
        rel = pts - foot
        kappa = path.curvature[i] + f * (path.curvature[i + 1] - path.curvature[i])
        d = tan[:, 0] * rel[:, 1] - tan[:, 1] * rel[:, 0]
        denom = 1.0 - kappa * d
        denom = np.where(np.abs(denom) > 1e-3, denom, 1.0)
        best_s = s_in + np.einsum("ij,ij->i", rel, tan) / denom
        if not path.closed:
            best_s = np.clip(best_s, 0.0, path.total_length)
    s_in = best_s if not path.closed else np.mod(best_s, path.total_length)
    i, f = _interval(path, s_in)
    foot, tan = _hermite(path, i, f)
    rel = pts - foot
    best_sd = tan[:, 0] * rel[:, 1] - tan[:, 1] * rel[:, 0]
    return s_in, best_sd
