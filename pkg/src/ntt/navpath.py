"""Navigation path: resampling, windowing, vector-node features and route noise."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import arclength, point_at_arclength, wrap_angle

ROUTE_SPACING = 5.0
WINDOW_SEGMENTS = 10
COMMANDS = ("left", "straight", "right")


@dataclass(frozen=True)
class NavWindow:
    points: np.ndarray  # (m + 1, 2)
    padded: bool = False
    start_index: int = 0

    @property
    def m(self) -> int:
        return len(self.points) - 1


@dataclass(frozen=True)
class NavNode:
    d: np.ndarray
    cos_h: float
    sin_h: float

    def features(self) -> np.ndarray:
        return np.array([self.d[0], self.d[1], self.cos_h, self.sin_h])


def interpolate_route(route, spacing: float = ROUTE_SPACING) -> np.ndarray:
    """Resample ``route`` at arclength multiples of ``spacing`` from its first vertex.

    The trailing partial segment is dropped.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    pts = np.asarray(route, dtype=np.float64)
    total = arclength(pts)[-1]
    if total < spacing:
        raise ValueError("route too short")
    n = int(math.floor(total / spacing + 1e-9))
    return point_at_arclength(pts, spacing * np.arange(n + 1))


def select_window(route, ego_pos, m: int = WINDOW_SEGMENTS) -> NavWindow:
    """Nearest route vertex to ``ego_pos`` plus the next ``m`` vertices.

    Ties go to the lowest index. A shortfall at the end of the route is filled by
    extending the last segment and the window is flagged ``padded``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    pts = np.asarray(route, dtype=np.float64)
    dist = np.linalg.norm(pts - np.asarray(ego_pos, dtype=np.float64), axis=1)
    start = int(np.argmin(dist))
    win = pts[start:start + m + 1]
    padded = len(win) < m + 1
    if padded:
        if len(pts) < 2:
            raise ValueError("route needs at least 2 vertices to extrapolate")
        step = pts[-1] - pts[-2]
        extra = m + 1 - len(win)
        win = np.concatenate([win, pts[-1] + step * np.arange(1, extra + 1)[:, None]])
    return NavWindow(points=win, padded=padded, start_index=start)


def vectorize_window(w: NavWindow) -> list[NavNode]:
    d = np.diff(w.points, axis=0)
    nodes = []
    for di in d:
        if math.hypot(di[0], di[1]) == 0.0:
            raise ValueError("duplicate navigation vertices")
        h = math.atan2(di[1], di[0])
        nodes.append(NavNode(d=di.copy(), cos_h=math.cos(h), sin_h=math.sin(h)))
    return nodes


def node_matrix(nodes: list[NavNode]) -> np.ndarray:
    return np.stack([n.features() for n in nodes])


def ego_in_window_frame(w: NavWindow, ego_pos=(0.0, 0.0)) -> np.ndarray:
    """Ego position in the window-local frame: origin at the first window point, +x along
    the first segment."""
    d0 = w.points[1] - w.points[0]
    h = math.atan2(d0[1], d0[0])
    rel = np.asarray(ego_pos, dtype=np.float64) - w.points[0]
    c, s = math.cos(h), math.sin(h)
    return np.array([rel[0] * c + rel[1] * s, -rel[0] * s + rel[1] * c])


def route_command(w: NavWindow, threshold_deg: float = 15.0) -> str:
    """Discrete command from the accumulated heading change over the window."""
    d = np.diff(w.points, axis=0)
    h = np.arctan2(d[:, 1], d[:, 0])
    turn = sum(wrap_angle(float(b - a)) for a, b in zip(h[:-1], h[1:]))
    thr = math.radians(threshold_deg)
    if turn > thr:
        return "left"
    if turn < -thr:
        return "right"
    return "straight"


def perturb_route(route, lateral_sigma: float = 2.0, along_sigma: float = 2.0,
                  seed: int | None = 0) -> np.ndarray:
    """Displace each vertex by Gaussian offsets in its local segment frame.

    Vertex i uses the direction of segment (i, i+1); the last vertex uses the final segment.
    """
    if lateral_sigma < 0 or along_sigma < 0:
        raise ValueError("sigmas must be non-negative")
    pts = np.asarray(route, dtype=np.float64)
    if lateral_sigma == 0 and along_sigma == 0:
        return pts.copy()
    rng = np.random.default_rng(seed)
    seg = np.diff(pts, axis=0)
    tang = np.concatenate([seg, seg[-1:]])
    norm = np.linalg.norm(tang, axis=1, keepdims=True)
    tang = tang / np.where(norm > 0, norm, 1.0)
    normal = np.stack([-tang[:, 1], tang[:, 0]], axis=1)
    lat = rng.normal(0.0, lateral_sigma, len(pts)) if lateral_sigma > 0 else np.zeros(len(pts))
    along = rng.normal(0.0, along_sigma, len(pts)) if along_sigma > 0 else np.zeros(len(pts))
    return pts + lat[:, None] * normal + along[:, None] * tang
