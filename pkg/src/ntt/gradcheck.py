"""Finite-difference check of the full stage-2 loss on a tiny two-lane scene."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .config import LossWeights, ModelConfig
from .features import collate, featurize
from .geometry import Pose2
from .nn import finite_diff_check
from .planner import build_params
from .scene import DT, K_STEPS, AgentTrack, MapElement, Scene

GRADCHECK_MODEL = ModelConfig(d=8, n_modes=2, n_map=8, n_agents=2, max_segments=8,
                              n_cand_max=160, centerline_range=20.0, fallback_range=15.0,
                              max_boundary_segments=16, max_divider_segments=16)


def toy_scene(seed: int) -> Scene:
    """Two parallel lanes 3.5 m apart, two agents, a gently bending route."""
    rng = np.random.default_rng(seed)
    xs = np.arange(-10.0, 41.0, 5.0)
    bend = rng.uniform(-0.004, 0.004)
    line = lambda y: np.stack([xs, y + bend * np.maximum(xs, 0) ** 2], axis=1)
    elems = [MapElement("lane_centerline", line(0.0)), MapElement("lane_centerline", line(3.5)),
             MapElement("lane_divider", line(1.75)), MapElement("road_boundary", line(-1.75)),
             MapElement("road_boundary", line(5.25))]
    speed = rng.uniform(4.0, 8.0)
    t = DT * np.arange(1, K_STEPS + 1)
    ego_gt = np.stack([speed * t, bend * (speed * t) ** 2], axis=1)
    agents = []
    for lane in (0.0, 3.5):
        x0, v = rng.uniform(5.0, 25.0), rng.uniform(2.0, 8.0)
        fut = np.stack([x0 + v * t, np.full(K_STEPS, lane)], axis=1)
        agents.append(AgentTrack(Pose2(x0, lane, 0.0), (v, 0.0), (4.5, 1.9), fut))
    route = line(rng.uniform(-1.0, 1.0))[1:] + rng.normal(0, 0.3, (len(xs) - 1, 2))
    return Scene(scene_id=f"toy-{seed}", ego=Pose2(0.0, 0.0, 0.0), ego_velocity=(speed, 0.0),
                 agents=agents, map=elems, route=route, ego_gt=ego_gt)


def grad_check(seed: int, mode: str = "tgt_path", cfg: ModelConfig = GRADCHECK_MODEL,
               eps: float = 1e-5, floor: float = 1e-5, max_entries: int | None = 24) -> float:
    """Worst relative error of backward() against central differences on the stage-2 loss."""
    from .training import compute_losses

    scene = toy_scene(seed)
    batch = collate([featurize(scene, cfg)])
    params = build_params(cfg, seed)
    weights = LossWeights()

    def loss():
        return compute_losses(params, cfg, batch, mode, 2, weights)[0]

    return finite_diff_check(loss, params.tensors, eps=eps, floor=floor, max_entries=max_entries, seed=seed)


def with_width(d: int) -> ModelConfig:
    return replace(GRADCHECK_MODEL, d=d)
