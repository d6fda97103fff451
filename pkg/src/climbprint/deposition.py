"""Material flow: extrusion rate, travel speed and bead cross-section.

Internally everything is SI (m, s). Extrusion rates cross the interface in
mm^3/s and are converted here, once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import DepositionError, NonMonotonicTimestamps, NonPositiveInput

MM3_TO_M3 = 1e-9


@dataclass(frozen=True)
class MaterialModel:
    extrusion_rate_range: tuple  # (Q_min, Q_max) mm^3/s
    cure_time: float  # s
    layer_height: float  # m
    bead_width_range: tuple  # (w_min, w_max) m

    def __post_init__(self):
        q_min, q_max = self.extrusion_rate_range
        w_min, w_max = self.bead_width_range
        if not 0 < q_min <= q_max:
            raise DepositionError("need 0 < Q_min <= Q_max", value=self.extrusion_rate_range)
        if not self.cure_time > 0:
            raise DepositionError("cure_time must be positive", value=self.cure_time)
        if not self.layer_height > 0:
            raise DepositionError("layer_height must be positive", value=self.layer_height)
        if not 0 < w_min <= w_max:
            raise DepositionError("need 0 < w_min <= w_max", value=self.bead_width_range)
        object.__setattr__(self, "extrusion_rate_range", (float(q_min), float(q_max)))
        object.__setattr__(self, "bead_width_range", (float(w_min), float(w_max)))

    @property
    def mid_extrusion_rate(self):
        return 0.5 * (self.extrusion_rate_range[0] + self.extrusion_rate_range[1])


@dataclass(frozen=True)
class BeadSegment:
    """One deposited strand of constant width.

    ``center`` holds the 3-D bead centerline (x, y, z at mid-height) and
    ``times`` the deposition time of each centerline point. Closed beads do
    not repeat their first point.
    """

    s0: float
    s1: float
    width: float
    height: float
    center: np.ndarray
    times: np.ndarray = field(default=None, repr=False)
    layer: int = 0
    closed: bool = False

    @property
    def length(self):
        pts = self.center[:, :2]
        if self.closed:
            pts = np.vstack([pts, pts[:1]])
        return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))

    @property
    def volume(self):
        """Bead volume in m^3."""
        return self.width * self.height * self.length


def bead_width(q: float, v: float, h: float) -> float:
    """Bead width (m) for extrusion rate ``q`` (mm^3/s), speed ``v`` (m/s) and layer height ``h`` (m).

    Volume conservation: the material extruded per second fills a
    ``v * h`` wide sweep.
    """
    if not (q > 0 and v > 0 and h > 0):
        raise NonPositiveInput("bead_width needs Q, v, h > 0", value=(q, v, h))
    return q * MM3_TO_M3 / (v * h)


def extrusion_for_width(w: float, v: float, h: float) -> float:
    """Inverse of :func:`bead_width`: the rate (mm^3/s) that lays width ``w``."""
    return w * v * h / MM3_TO_M3


def max_device_speed(material: MaterialModel, layer_path_length: float) -> float:
    """Fastest speed that still lets a layer cure before it is revisited."""
    if not layer_path_length > 0:
        raise NonPositiveInput("layer_path_length must be positive", value=layer_path_length)
    return layer_path_length / material.cure_time


def interval_volumes(records) -> np.ndarray:
    """Extruded volume (mm^3) in each interval between consecutive records.

    An interval counts when the record opening it is extruding. The rate is
    linear between consecutive extruding records; after the last extruding
    record of a run the rate is held until the next record.
    """
    n = len(records)
    if n < 2:
        return np.zeros(0)
    t = np.array([r.t for r in records], dtype=float)
    if np.any(np.diff(t) <= 0):
        i = int(np.argmax(np.diff(t) <= 0))
        raise NonMonotonicTimestamps("timestamps must be strictly increasing", value=(t[i], t[i + 1]))
    q = np.array([r.extrusion_rate for r in records], dtype=float)
    on = np.array([r.extruding for r in records], dtype=bool)
    q_end = np.where(on[1:], q[1:], q[:-1])
    vol = 0.5 * (q[:-1] + q_end) * np.diff(t)
    return np.where(on[:-1], vol, 0.0)


def deposited_volume(trace) -> float:
    """Total extruded volume (mm^3) of a control trace (trapezoidal rule)."""
    records = getattr(trace, "records", trace)
    return math.fsum(interval_volumes(records))
