"""Open-loop planning metrics: L2 displacement and box-overlap collision rate."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .geometry import EGO_LENGTH, EGO_WIDTH, OrientedBox, boxes_overlap, headings_along, to_ego_frame, wrap_angle
from .planner import plan_batch
from .scene import DT, Scene

METRICS_VERSION = "metrics_v1"
HORIZONS = (1.0, 2.0, 3.0)
L2_MODES = ("instant", "cumulative")

_HORIZON_SCHEMA = {
    "type": "object",
    "properties": {k: {"type": "number", "minimum": 0} for k in ("1s", "2s", "3s", "avg")},
    "required": ["1s", "2s", "3s", "avg"],
    "additionalProperties": False,
}
METRICS_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "version": {"const": METRICS_VERSION},
        "mode": {"type": "string"},
        "subset": {"type": "string"},
        "l2_mode": {"enum": list(L2_MODES)},
        "n": {"type": "integer", "minimum": 0},
        "l2": _HORIZON_SCHEMA,
        "collision": {**_HORIZON_SCHEMA, "properties": {
            k: {"type": "number", "minimum": 0, "maximum": 100} for k in ("1s", "2s", "3s", "avg")}},
    },
    "required": ["version", "mode", "subset", "l2_mode", "n", "l2", "collision"],
    "additionalProperties": False,
}


def horizon_index(t: float, k: int, dt: float = DT) -> int:
    """Index of the plan point at ``t`` seconds (first point is at dt)."""
    idx = int(round(t / dt)) - 1
    if idx < 0 or idx >= k or abs((idx + 1) * dt - t) > 1e-9:
        raise ValueError(f"horizon {t}s is not a step of a {k}-point plan at dt={dt}")
    return idx


@dataclass(frozen=True)
class MetricsReport:
    mode: str
    subset: str
    l2_mode: str
    n: int
    l2: tuple[float, float, float]
    collision: tuple[float, float, float]   # percent

    @property
    def l2_avg(self) -> float:
        return float(np.mean(self.l2))

    @property
    def collision_avg(self) -> float:
        return float(np.mean(self.collision))

    def to_dict(self) -> dict:
        def block(vals, avg):
            return {"1s": vals[0], "2s": vals[1], "3s": vals[2], "avg": avg}
        return {
            "version": METRICS_VERSION, "mode": self.mode, "subset": self.subset, "l2_mode": self.l2_mode,
            "n": self.n, "l2": block(self.l2, self.l2_avg), "collision": block(self.collision, self.collision_avg),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def l2_at_horizons(plan: np.ndarray, gt: np.ndarray, l2_mode: str = "instant") -> np.ndarray:
    """L2 error per horizon for one sample: the error at that step, or its mean up to that step."""
    if l2_mode not in L2_MODES:
        raise ValueError(f"unknown l2 mode {l2_mode!r}")
    err = np.linalg.norm(np.asarray(plan) - np.asarray(gt), axis=1)
    out = []
    for t in HORIZONS:
        i = horizon_index(t, len(err))
        out.append(err[i] if l2_mode == "instant" else err[: i + 1].mean())
    return np.array(out)


def ego_boxes(plan: np.ndarray) -> list[OrientedBox]:
    """Ego footprint at each plan point; heading from consecutive points, 0 before the first."""
    plan = np.asarray(plan, dtype=np.float64)
    pts = np.vstack([np.zeros((1, 2)), plan])
    heads = headings_along(pts, 0.0)[1:]
    return [OrientedBox(p[0], p[1], h, EGO_LENGTH, EGO_WIDTH) for p, h in zip(plan, heads)]


def agent_boxes(scene: Scene) -> list[list[OrientedBox]]:
    """Per agent, the ego-frame footprint at each future step."""
    out = []
    for a in scene.agents:
        cur = to_ego_frame(np.array([[a.pose.x, a.pose.y]]), scene.ego)
        fut = to_ego_frame(a.future, scene.ego)
        h0 = wrap_angle(a.pose.heading - scene.ego.heading)
        heads = headings_along(np.vstack([cur, fut]), h0)[1:]
        length, width = max(a.size), min(a.size)
        out.append([OrientedBox(p[0], p[1], h, length, width) for p, h in zip(fut, heads)])
    return out


def collision_steps(plan: np.ndarray, scene: Scene) -> np.ndarray:
    """Boolean per step: the ego box overlaps some agent box at that step."""
    eb = ego_boxes(plan)
    hits = np.zeros(len(eb), dtype=bool)
    for boxes in agent_boxes(scene):
        for i, (e, b) in enumerate(zip(eb, boxes)):
            hits[i] |= boxes_overlap(e, b)
    return hits


def collision_at_horizons(plan: np.ndarray, scene: Scene) -> np.ndarray:
    hits = collision_steps(plan, scene)
    return np.array([hits[: horizon_index(t, len(hits)) + 1].any() for t in HORIZONS])


def evaluate_plans(plans, scenes: list[Scene], mode: str = "", subset: str = "all",
                   l2_mode: str = "instant") -> MetricsReport:
    """Aggregate metrics over ``scenes`` for the given plans (one [k, 2] array per scene)."""
    plans = list(plans)
    if len(plans) != len(scenes):
        raise ValueError("need one plan per scene")
    if not scenes:
        return MetricsReport(mode, subset, l2_mode, 0, (0.0, 0.0, 0.0), (0.0, 0.0, 0.0))
    l2 = np.stack([l2_at_horizons(p, s.ego_gt, l2_mode) for p, s in zip(plans, scenes)])
    col = np.stack([collision_at_horizons(p, s) for p, s in zip(plans, scenes)])
    return MetricsReport(
        mode=mode, subset=subset, l2_mode=l2_mode, n=len(scenes),
        l2=tuple(float(v) for v in l2.mean(axis=0)),
        collision=tuple(float(v) for v in 100.0 * col.mean(axis=0)),
    )


def evaluate(checkpoint, scenes: list[Scene], mode: str | None = None, subset: str = "all",
             l2_mode: str = "instant", batch_size: int = 64) -> MetricsReport:
    """Plan every scene with the checkpoint's parameters and score the plans."""
    mode = mode or checkpoint.mode
    plans = []
    for i in range(0, len(scenes), batch_size):
        plans += [r.trajectory.points for r in
                  plan_batch(checkpoint.params, checkpoint.config.model, scenes[i:i + batch_size], mode)]
    return evaluate_plans(plans, scenes, mode, subset, l2_mode)
