"""Scene -> fixed-size ego-frame arrays, and batching into torch tensors."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
import torch

from .candidates import CandidateSet, sample_candidates
from .config import ModelConfig
from .geometry import nearest_point_on_polyline, to_ego_frame, wrap_angle
from .navpath import (COMMANDS, NavWindow, ego_in_window_frame, interpolate_route, node_matrix,
                      route_command, select_window, vectorize_window)
from .nn import DTYPE
from .scene import AGENT_CATEGORIES, MAP_KINDS, Scene

MAP_FEAT = 6 + len(MAP_KINDS)
AGENT_FEAT = 8 + len(AGENT_CATEGORIES)
EGO_FEAT = 2


@dataclass
class SceneFeatures:
    map_feats: np.ndarray      # (n_map, S, MAP_FEAT)
    map_seg_mask: np.ndarray   # (n_map, S)
    map_mask: np.ndarray       # (n_map,)
    agent_feats: np.ndarray    # (n_agents, AGENT_FEAT)
    agent_mask: np.ndarray     # (n_agents,)
    agent_fut: np.ndarray      # (n_agents, k, 2) ego frame
    agent_fut_rel: np.ndarray  # (n_agents, k, 2) relative to current position
    ego_feats: np.ndarray      # (EGO_FEAT,) ego-frame velocity / speed_scale
    nav_nodes: np.ndarray      # (m, 4) raw [dx, dy, cos, sin]
    nav_ego: np.ndarray        # (2,) ego position in the window frame
    cmd: np.ndarray            # () command index
    cands: np.ndarray          # (n_cand_max, 2)
    cand_mask: np.ndarray      # (n_cand_max,)
    cand_source: np.ndarray    # (n_cand_max,) CENTERLINE / FORWARD_FALLBACK, -1 for padding
    label: np.ndarray          # () index of the candidate nearest the gt endpoint
    bd_segs: np.ndarray        # (Sb, 2, 2)
    bd_mask: np.ndarray
    div_segs: np.ndarray       # (Sd, 2, 2)
    div_mask: np.ndarray
    ego_gt: np.ndarray         # (k, 2)


def nav_window(scene: Scene, cfg: ModelConfig) -> NavWindow:
    route = to_ego_frame(scene.route, scene.ego)
    return select_window(interpolate_route(route, cfg.route_spacing), (0.0, 0.0), cfg.m)


def _nearest_subset(dists: np.ndarray, n: int) -> np.ndarray:
    """Indices of the ``n`` smallest distances, returned in their original order."""
    if len(dists) <= n:
        return np.arange(len(dists))
    return np.sort(np.argsort(dists, kind="stable")[:n])


def _limit_vertices(pts: np.ndarray, max_segments: int) -> np.ndarray:
    if len(pts) - 1 <= max_segments:
        return pts
    idx = np.unique(np.round(np.linspace(0, len(pts) - 1, max_segments + 1)).astype(int))
    return pts[idx]


def map_features(scene: Scene, cfg: ModelConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    feats = np.zeros((cfg.n_map, cfg.max_segments, MAP_FEAT))
    seg_mask = np.zeros((cfg.n_map, cfg.max_segments), dtype=bool)
    mask = np.zeros(cfg.n_map, dtype=bool)
    elems = [(e.kind, to_ego_frame(e.points, scene.ego)) for e in scene.map]
    if not elems:
        return feats, seg_mask, mask
    dists = np.array([nearest_point_on_polyline(p, (0.0, 0.0))[1] for _, p in elems])
    for slot, i in enumerate(_nearest_subset(dists, cfg.n_map)):
        kind, pts = elems[i]
        pts = _limit_vertices(pts, cfg.max_segments)
        d = np.diff(pts, axis=0)
        h = np.arctan2(d[:, 1], d[:, 0])
        n = len(d)
        onehot = np.zeros(len(MAP_KINDS))
        onehot[MAP_KINDS.index(kind)] = 1.0
        feats[slot, :n, 0:2] = pts[:-1] / cfg.coord_scale
        feats[slot, :n, 2:4] = d / cfg.coord_scale
        feats[slot, :n, 4] = np.cos(h)
        feats[slot, :n, 5] = np.sin(h)
        feats[slot, :n, 6:] = onehot
        seg_mask[slot, :n] = np.linalg.norm(d, axis=1) > 0
        mask[slot] = seg_mask[slot].any()
    return feats, seg_mask, mask


def agent_features(scene: Scene, cfg: ModelConfig):
    feats = np.zeros((cfg.n_agents, AGENT_FEAT))
    mask = np.zeros(cfg.n_agents, dtype=bool)
    fut = np.zeros((cfg.n_agents, cfg.k, 2))
    fut_rel = np.zeros((cfg.n_agents, cfg.k, 2))
    if not scene.agents:
        return feats, mask, fut, fut_rel
    pos = to_ego_frame(np.array([[a.pose.x, a.pose.y] for a in scene.agents]), scene.ego)
    c, s = math.cos(scene.ego.heading), math.sin(scene.ego.heading)
    for slot, i in enumerate(_nearest_subset(np.linalg.norm(pos, axis=1), cfg.n_agents)):
        a = scene.agents[i]
        vx, vy = a.velocity
        vel = np.array([vx * c + vy * s, -vx * s + vy * c])
        h = wrap_angle(a.pose.heading - scene.ego.heading)
        onehot = np.zeros(len(AGENT_CATEGORIES))
        onehot[AGENT_CATEGORIES.index(a.category)] = 1.0
        feats[slot] = np.concatenate([
            pos[i] / cfg.coord_scale, vel / cfg.speed_scale, [math.cos(h), math.sin(h)],
            np.asarray(a.size) / cfg.size_scale, onehot,
        ])
        mask[slot] = True
        fut[slot] = to_ego_frame(a.future, scene.ego)
        fut_rel[slot] = fut[slot] - pos[i]
    return feats, mask, fut, fut_rel


def ego_features(scene: Scene, cfg: ModelConfig) -> np.ndarray:
    c, s = math.cos(scene.ego.heading), math.sin(scene.ego.heading)
    vx, vy = scene.ego_velocity
    return np.array([vx * c + vy * s, -vx * s + vy * c]) / cfg.speed_scale


def _segments(lines: list[np.ndarray], limit: int) -> tuple[np.ndarray, np.ndarray]:
    segs = np.zeros((limit, 2, 2))
    mask = np.zeros(limit, dtype=bool)
    if lines:
        allsegs = np.concatenate([np.stack([p[:-1], p[1:]], axis=1) for p in lines])
        allsegs = allsegs[np.linalg.norm(allsegs[:, 1] - allsegs[:, 0], axis=1) > 0]
        if len(allsegs) > limit:
            mid = allsegs.mean(axis=1)
            allsegs = allsegs[_nearest_subset(np.linalg.norm(mid, axis=1), limit)]
        segs[: len(allsegs)] = allsegs
        mask[: len(allsegs)] = True
    return segs, mask


def candidates_for(scene: Scene, cfg: ModelConfig) -> CandidateSet:
    return sample_candidates(scene.elements("lane_centerline"), cfg)


def nearest_index(coords: np.ndarray, point) -> int:
    """Index of the coordinate nearest ``point``; lowest index on ties."""
    return int(np.argmin(np.linalg.norm(np.asarray(coords) - np.asarray(point), axis=1)))


def featurize(scene: Scene, cfg: ModelConfig) -> SceneFeatures:
    map_feats, map_seg_mask, map_mask = map_features(scene, cfg)
    agent_feats, agent_mask, agent_fut, agent_fut_rel = agent_features(scene, cfg)
    win = nav_window(scene, cfg)
    cset = candidates_for(scene, cfg)
    cands = np.zeros((cfg.n_cand_max, 2))
    cand_mask = np.zeros(cfg.n_cand_max, dtype=bool)
    cands[: len(cset)] = cset.coords
    cand_mask[: len(cset)] = True
    cand_source = np.full(cfg.n_cand_max, -1)
    cand_source[: len(cset)] = cset.source
    bd_segs, bd_mask = _segments(scene.elements("road_boundary"), cfg.max_boundary_segments)
    div_segs, div_mask = _segments(scene.elements("lane_divider"), cfg.max_divider_segments)
    return SceneFeatures(
        map_feats=map_feats, map_seg_mask=map_seg_mask, map_mask=map_mask,
        agent_feats=agent_feats, agent_mask=agent_mask, agent_fut=agent_fut,
        agent_fut_rel=agent_fut_rel, ego_feats=ego_features(scene, cfg),
        nav_nodes=node_matrix(vectorize_window(win)),
        nav_ego=ego_in_window_frame(win),
        cmd=np.array(COMMANDS.index(route_command(win, cfg.cmd_threshold_deg))),
        cands=cands, cand_mask=cand_mask, cand_source=cand_source,
        label=np.array(nearest_index(cset.coords, scene.ego_gt[-1])),
        bd_segs=bd_segs, bd_mask=bd_mask, div_segs=div_segs, div_mask=div_mask,
        ego_gt=scene.ego_gt.copy(),
    )


# padded axes that collate trims to the longest valid entry in the batch
_TRIM = {
    "cand_mask": ("cands", "cand_mask", "cand_source"),
    "agent_mask": ("agent_feats", "agent_mask", "agent_fut", "agent_fut_rel"),
    "bd_mask": ("bd_segs", "bd_mask"),
    "div_mask": ("div_segs", "div_mask"),
}


def collate(items: list[SceneFeatures], trim: bool = True) -> dict[str, torch.Tensor]:
    """Stack features into tensors.

    With ``trim`` the padded candidate/agent/segment axes are cut to the largest valid
    count in the batch (at least 1). Masked entries contribute nothing, so this changes
    cost but not results.
    """
    arrays = {f.name: np.stack([getattr(it, f.name) for it in items]) for f in fields(SceneFeatures)}
    if trim:
        for mask_name, names in _TRIM.items():
            valid = arrays[mask_name].any(axis=0)
            n = max(1, int(np.flatnonzero(valid)[-1]) + 1) if valid.any() else 1
            for name in names:
                arrays[name] = arrays[name][:, :n]
    batch = {}
    for name, arr in arrays.items():
        if arr.dtype == bool:
            batch[name] = torch.from_numpy(np.ascontiguousarray(arr))
        elif np.issubdtype(arr.dtype, np.integer):
            batch[name] = torch.from_numpy(arr.astype(np.int64))
        else:
            batch[name] = torch.from_numpy(arr.astype(np.float64)).to(DTYPE)
    return batch
