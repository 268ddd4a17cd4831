"""Planar geometry: poses, frame transforms, polyline queries and box overlap.

Ego frame: +x forward, +y left, origin at the ego reference point at t=0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EGO_LENGTH = 4.0
EGO_WIDTH = 1.8


def wrap_angle(a: float) -> float:
    """Map an angle into (-pi, pi]."""
    r = math.atan2(math.sin(a), math.cos(a))
    return math.pi if r <= -math.pi else r


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    heading: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.heading)):
            raise ValueError("pose must be finite")
        if not -math.pi < self.heading <= math.pi:
            object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class OrientedBox:
    cx: float
    cy: float
    heading: float
    length: float
    width: float

    def __post_init__(self):
        if not (self.length >= self.width > 0):
            raise ValueError(f"need length >= width > 0, got {self.length}x{self.width}")

    def corners(self) -> np.ndarray:
        c, s = math.cos(self.heading), math.sin(self.heading)
        hl, hw = self.length / 2, self.width / 2
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.cx, self.cy])

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts) - np.array([self.cx, self.cy])
        c, s = math.cos(self.heading), math.sin(self.heading)
        lx = pts[:, 0] * c + pts[:, 1] * s
        ly = -pts[:, 0] * s + pts[:, 1] * c
        return (np.abs(lx) <= self.length / 2) & (np.abs(ly) <= self.width / 2)


def as_polyline(points) -> np.ndarray:
    """Validate and return an (N, 2) float array with N >= 2 and positive arclength."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise ValueError("polyline needs at least 2 points of shape (N, 2)")
    if not np.all(np.isfinite(pts)):
        raise ValueError("polyline has non-finite coordinates")
    if arclength(pts)[-1] <= 0:
        raise ValueError("polyline has zero arclength")
    return pts


def arclength(pts: np.ndarray) -> np.ndarray:
    """Cumulative arclength at each vertex, starting at 0."""
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def point_at_arclength(pts: np.ndarray, s: np.ndarray | float) -> np.ndarray:
    """Interpolate positions at arclength(s); extrapolates linearly past either end."""
    cum = arclength(pts)
    s_arr = np.atleast_1d(np.asarray(s, dtype=np.float64))
    idx = np.clip(np.searchsorted(cum, s_arr, side="right") - 1, 0, len(pts) - 2)
    seg_len = cum[idx + 1] - cum[idx]
    seg_len = np.where(seg_len > 0, seg_len, 1.0)
    t = (s_arr - cum[idx]) / seg_len
    out = pts[idx] + t[:, None] * (pts[idx + 1] - pts[idx])
    return out[0] if np.ndim(s) == 0 else out


def heading_at_arclength(pts: np.ndarray, s: np.ndarray | float) -> np.ndarray:
    cum = arclength(pts)
    s_arr = np.atleast_1d(np.asarray(s, dtype=np.float64))
    idx = np.clip(np.searchsorted(cum, s_arr, side="right") - 1, 0, len(pts) - 2)
    d = pts[idx + 1] - pts[idx]
    h = np.arctan2(d[:, 1], d[:, 0])
    return h[0] if np.ndim(s) == 0 else h


def to_ego_frame(p, ego: Pose2) -> np.ndarray:
    """Translate by -ego.position, then rotate by -ego.heading. Accepts (2,) or (N, 2)."""
    p = np.asarray(p, dtype=np.float64)
    c, s = math.cos(ego.heading), math.sin(ego.heading)
    d = p - np.array([ego.x, ego.y])
    x = d[..., 0] * c + d[..., 1] * s
    y = -d[..., 0] * s + d[..., 1] * c
    return np.stack([x, y], axis=-1)


def from_ego_frame(p, ego: Pose2) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    c, s = math.cos(ego.heading), math.sin(ego.heading)
    x = p[..., 0] * c - p[..., 1] * s + ego.x
    y = p[..., 0] * s + p[..., 1] * c + ego.y
    return np.stack([x, y], axis=-1)


def rotate_vec(v, angle: float) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    c, s = math.cos(angle), math.sin(angle)
    return np.stack([v[..., 0] * c - v[..., 1] * s, v[..., 0] * s + v[..., 1] * c], axis=-1)


def nearest_point_on_polyline(line, p) -> tuple[np.ndarray, float, int]:
    """Segment-projected foot of ``p`` on ``line``.

    Returns (foot, distance, segment_index). Zero-length segments are skipped.
    """
    pts = np.asarray(line, dtype=np.float64)
    if len(pts) < 2:
        raise ValueError("polyline needs at least 2 points")
    p = np.asarray(p, dtype=np.float64)
    a, b = pts[:-1], pts[1:]
    ab = b - a
    L2 = np.einsum("ij,ij->i", ab, ab)
    valid = L2 > 0
    if not valid.any():
        raise ValueError("polyline has only zero-length segments")
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.where(valid, L2, 1.0), 0.0, 1.0)
    feet = a + t[:, None] * ab
    dist = np.linalg.norm(feet - p, axis=1)
    dist = np.where(valid, dist, np.inf)
    i = int(np.argmin(dist))
    return feet[i], float(dist[i]), i


def _axes(corners: np.ndarray) -> np.ndarray:
    edges = np.roll(corners, -1, axis=0) - corners
    return np.stack([-edges[:2, 1], edges[:2, 0]], axis=1)


def boxes_overlap(a: OrientedBox, b: OrientedBox) -> bool:
    """Separating-axis test over the two edge normals of each rectangle."""
    ca, cb = a.corners(), b.corners()
    for axis in np.concatenate([_axes(ca), _axes(cb)]):
        pa, pb = ca @ axis, cb @ axis
        if pa.max() < pb.min() or pb.max() < pa.min():
            return False
    return True


def lateral_displacement(gt) -> float:
    """Largest |y| over ego-frame points."""
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 2)
    if len(gt) == 0:
        raise ValueError("need at least one point")
    return float(np.max(np.abs(gt[:, 1])))


def headings_along(points: np.ndarray, initial_heading: float = 0.0, min_step: float = 1e-6) -> np.ndarray:
    """Heading at each point from the displacement to the previous point.

    The first point's heading is ``initial_heading``; steps shorter than ``min_step``
    inherit the previous heading.
    """
    out = np.empty(len(points))
    prev = initial_heading
    for i in range(len(points)):
        if i > 0:
            d = points[i] - points[i - 1]
            if math.hypot(d[0], d[1]) > min_step:
                prev = math.atan2(d[1], d[0])
        out[i] = prev
    return out
