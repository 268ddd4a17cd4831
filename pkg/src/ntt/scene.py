"""Scene containers and the ``scene_v1`` JSONL format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .geometry import Pose2, as_polyline, to_ego_frame

SCENE_VERSION = "scene_v1"
MAP_KINDS = ("lane_divider", "road_boundary", "pedestrian_crossing", "lane_centerline")
AGENT_CATEGORIES = ("car", "truck", "bicycle")
K_STEPS = 6
DT = 0.5


@dataclass(frozen=True)
class MapElement:
    kind: str
    points: np.ndarray

    def __post_init__(self):
        if self.kind not in MAP_KINDS:
            raise ValueError(f"unknown map element kind {self.kind!r}")
        object.__setattr__(self, "points", as_polyline(self.points))


@dataclass(frozen=True)
class AgentTrack:
    pose: Pose2
    velocity: tuple[float, float]
    size: tuple[float, float]
    future: np.ndarray
    category: str = "car"

    def __post_init__(self):
        fut = np.asarray(self.future, dtype=np.float64)
        if fut.shape != (K_STEPS, 2):
            raise ValueError(f"agent future must be ({K_STEPS}, 2), got {fut.shape}")
        if not (self.size[0] > 0 and self.size[1] > 0):
            raise ValueError("agent size must be positive")
        if self.category not in AGENT_CATEGORIES:
            raise ValueError(f"unknown agent category {self.category!r}")
        object.__setattr__(self, "future", fut)


@dataclass(frozen=True)
class Scene:
    """One driving sample. Geometry is in the world frame except ``ego_gt`` (ego frame)."""

    scene_id: str
    ego: Pose2
    ego_velocity: tuple[float, float]
    agents: tuple[AgentTrack, ...]
    map: tuple[MapElement, ...]
    route: np.ndarray
    ego_gt: np.ndarray
    kind: str = "straight"
    maneuver: str = "straight"
    no_centerline: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        gt = np.asarray(self.ego_gt, dtype=np.float64)
        if gt.shape != (K_STEPS, 2):
            raise ValueError(f"ego_gt must be ({K_STEPS}, 2), got {gt.shape}")
        object.__setattr__(self, "ego_gt", gt)
        object.__setattr__(self, "route", as_polyline(self.route))
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "map", tuple(self.map))
        if not self.no_centerline and not any(e.kind == "lane_centerline" for e in self.map):
            raise ValueError("scene has no lane_centerline and no_centerline is not set")

    def elements(self, kind: str) -> list[np.ndarray]:
        """Ego-frame geometry of every map element of ``kind``."""
        return [to_ego_frame(e.points, self.ego) for e in self.map if e.kind == kind]

    def agent_futures_ego(self) -> np.ndarray:
        if not self.agents:
            return np.zeros((0, K_STEPS, 2))
        return np.stack([to_ego_frame(a.future, self.ego) for a in self.agents])


@dataclass(frozen=True)
class PlannedTrajectory:
    points: np.ndarray
    dt: float = DT

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (K_STEPS, 2) or not np.all(np.isfinite(pts)):
            raise ValueError(f"planned trajectory must be finite ({K_STEPS}, 2)")
        object.__setattr__(self, "points", pts)


def _pts(a: np.ndarray) -> list:
    return [[float(x), float(y)] for x, y in np.asarray(a)]


def scene_to_dict(s: Scene) -> dict:
    return {
        "version": SCENE_VERSION,
        "id": s.scene_id,
        "kind": s.kind,
        "maneuver": s.maneuver,
        "no_centerline": s.no_centerline,
        "ego": {"x": s.ego.x, "y": s.ego.y, "heading": s.ego.heading,
                "vx": float(s.ego_velocity[0]), "vy": float(s.ego_velocity[1])},
        "agents": [
            {
                "x": a.pose.x, "y": a.pose.y, "heading": a.pose.heading,
                "vx": float(a.velocity[0]), "vy": float(a.velocity[1]),
                "length": float(a.size[0]), "width": float(a.size[1]),
                "category": a.category, "future": _pts(a.future),
            }
            for a in s.agents
        ],
        "map": [{"kind": e.kind, "points": _pts(e.points)} for e in s.map],
        "route": _pts(s.route),
        "ego_gt": _pts(s.ego_gt),
        "meta": s.meta,
    }


def scene_from_dict(d: dict) -> Scene:
    if d.get("version") != SCENE_VERSION:
        raise ValueError(f"unsupported scene version {d.get('version')!r}")
    e = d["ego"]
    agents = [
        AgentTrack(
            pose=Pose2(a["x"], a["y"], a["heading"]),
            velocity=(a["vx"], a["vy"]),
            size=(a["length"], a["width"]),
            future=np.array(a["future"], dtype=np.float64),
            category=a["category"],
        )
        for a in d["agents"]
    ]
    return Scene(
        scene_id=d["id"],
        ego=Pose2(e["x"], e["y"], e["heading"]),
        ego_velocity=(e["vx"], e["vy"]),
        agents=tuple(agents),
        map=tuple(MapElement(m["kind"], np.array(m["points"], dtype=np.float64)) for m in d["map"]),
        route=np.array(d["route"], dtype=np.float64),
        ego_gt=np.array(d["ego_gt"], dtype=np.float64),
        kind=d.get("kind", "straight"),
        maneuver=d.get("maneuver", "straight"),
        no_centerline=d.get("no_centerline", False),
        meta=d.get("meta", {}),
    )


def write_jsonl(scenes: Iterable[Scene], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in scenes:
            f.write(json.dumps(scene_to_dict(s), sort_keys=True) + "\n")


def iter_jsonl(path: str | Path) -> Iterator[Scene]:
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                yield scene_from_dict(json.loads(line))


def read_jsonl(path: str | Path) -> list[Scene]:
    return list(iter_jsonl(path))
