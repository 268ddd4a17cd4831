"""Dense target candidates along lane centerlines plus a forward fallback grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .config import ModelConfig
from .geometry import arclength, heading_at_arclength, point_at_arclength

CENTERLINE = 0
FORWARD_FALLBACK = 1


@dataclass(frozen=True)
class CandidateSet:
    coords: np.ndarray  # (N_t, 2) ego frame
    source: np.ndarray  # (N_t,) CENTERLINE or FORWARD_FALLBACK

    def __len__(self) -> int:
        return len(self.coords)


def _centerline_points(line: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    total = arclength(line)[-1]
    if total <= 0:
        return np.zeros((0, 2))
    s = np.arange(0.0, total + 1e-9, cfg.along_step)
    base = point_at_arclength(line, s)
    h = heading_at_arclength(line, s)
    normal = np.stack([-np.sin(h), np.cos(h)], axis=1)
    keep = (base[:, 0] >= 0) & (np.linalg.norm(base, axis=1) <= cfg.centerline_range)
    base, normal = base[keep], normal[keep]
    if not len(base):
        return np.zeros((0, 2))
    offs = np.asarray(cfg.lateral_offsets)
    return (base[:, None, :] + offs[None, :, None] * normal[:, None, :]).reshape(-1, 2)


def forward_grid(cfg: ModelConfig) -> np.ndarray:
    xs = np.arange(0.0, cfg.fallback_range + 1e-9, cfg.grid_step)
    ys = np.arange(-cfg.fallback_halfwidth, cfg.fallback_halfwidth + 1e-9, cfg.grid_step)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def dedup(points: np.ndarray, radius: float) -> np.ndarray:
    """Indices of a greedy (first-come) subset with no pair closer than ``radius``."""
    if len(points) == 0:
        return np.zeros(0, dtype=int)
    pairs = cKDTree(points).query_pairs(radius, output_type="ndarray")
    removed = np.zeros(len(points), dtype=bool)
    if len(pairs):
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
        for i, j in pairs:
            if not removed[i]:
                removed[j] = True
    return np.flatnonzero(~removed)


def ray_priority(points: np.ndarray) -> np.ndarray:
    """Distance to the ego heading ray (+x from the origin)."""
    return np.where(points[:, 0] >= 0, np.abs(points[:, 1]), np.linalg.norm(points, axis=1))


def sample_candidates(centerlines: list[np.ndarray], cfg: ModelConfig) -> CandidateSet:
    """Candidates from ego-frame ``centerlines`` and the forward grid.

    Deduplicated within ``cfg.dedup_radius`` and capped at ``cfg.n_cand_max`` keeping the
    points closest to the ego heading ray; surviving points keep their generation order.
    """
    chunks, tags = [], []
    for line in centerlines:
        pts = _centerline_points(np.asarray(line, dtype=np.float64), cfg)
        chunks.append(pts)
        tags.append(np.full(len(pts), CENTERLINE))
    grid = forward_grid(cfg)
    chunks.append(grid)
    tags.append(np.full(len(grid), FORWARD_FALLBACK))
    coords = np.concatenate(chunks)
    source = np.concatenate(tags)
    keep = dedup(coords, cfg.dedup_radius)
    coords, source = coords[keep], source[keep]
    if len(coords) > cfg.n_cand_max:
        order = np.argsort(ray_priority(coords), kind="stable")[: cfg.n_cand_max]
        order.sort()
        coords, source = coords[order], source[order]
    return CandidateSet(coords=coords, source=source)
