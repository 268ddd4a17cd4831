"""Synthetic driving scenes: straight roads, single turns and two-junction intersections,
with lane-following agents and a coarse, noisy navigation route."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .geometry import (EGO_LENGTH, EGO_WIDTH, OrientedBox, Pose2, arclength, boxes_overlap,
                       heading_at_arclength, lateral_displacement, point_at_arclength, to_ego_frame,
                       wrap_angle)
from .navpath import perturb_route
from .scene import DT, K_STEPS, AgentTrack, MapElement, Scene, read_jsonl, write_jsonl

log = logging.getLogger(__name__)

KINDS = ("straight", "left_turn", "right_turn", "intersection")
LANE_WIDTH = 3.5
ROAD_HALF_WIDTH = 7.0
MAP_BEHIND = 20.0
MAP_AHEAD = 60.0
MAP_VERTEX_SPACING = 3.5
PATH_STEP = 0.5
TURNING_THRESHOLD = 2.0
AGENT_SIZES = {"car": (4.5, 1.9), "truck": (7.5, 2.4), "bicycle": (1.8, 0.7)}


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    curvature: float = 0.0
    agent_count: int = 0
    ego_speed: float = 8.0
    seed: int = 0
    route_sigma: tuple[float, float] = (2.0, 2.0)
    route_spacing: float = 10.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.kind == "straight" and self.curvature != 0:
            raise ValueError("straight scenarios have zero curvature")
        if self.kind != "straight" and self.curvature == 0:
            raise ValueError(f"{self.kind} needs a non-zero curvature")
        if self.agent_count < 0 or self.ego_speed <= 0:
            raise ValueError("need agent_count >= 0 and ego_speed > 0")


def build_path(pieces, start=(0.0, 0.0, 0.0), step: float = PATH_STEP) -> np.ndarray:
    """Dense polyline from ("straight", length) and ("arc", radius, signed_angle) pieces."""
    x, y, h = start
    pts = [(x, y)]
    for piece in pieces:
        if piece[0] == "straight":
            n = max(1, int(math.ceil(piece[1] / step)))
            ds = piece[1] / n
            for _ in range(n):
                x += ds * math.cos(h)
                y += ds * math.sin(h)
                pts.append((x, y))
        else:
            _, radius, angle = piece
            n = max(1, int(math.ceil(radius * abs(angle) / step)))
            dh = angle / n
            for _ in range(n):
                # exact chord of a circular arc
                chord = 2 * radius * math.sin(abs(dh) / 2)
                hm = h + dh / 2
                x += chord * math.cos(hm)
                y += chord * math.sin(hm)
                h += dh
                pts.append((x, y))
    return np.array(pts)


def offset_path(path: np.ndarray, offset: float) -> np.ndarray:
    """Shift ``path`` sideways by ``offset`` (positive = left)."""
    if offset == 0:
        return path.copy()
    t = np.gradient(path, axis=0)
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    return path + offset * np.stack([-t[:, 1], t[:, 0]], axis=1)


def clip_path(path: np.ndarray, s0: float, s1: float, spacing: float = MAP_VERTEX_SPACING) -> np.ndarray:
    """Resample ``path`` between arclengths s0 and s1 (clamped to the path)."""
    total = arclength(path)[-1]
    s0, s1 = max(0.0, s0), min(total, s1)
    n = max(1, int(math.ceil((s1 - s0) / spacing)))
    return point_at_arclength(path, np.linspace(s0, s1, n + 1))


@dataclass
class _Layout:
    ego_path: np.ndarray
    s_ego: float
    lanes: list  # lane polylines agents may follow
    elements: list  # (kind, polyline) pairs
    maneuver: str


def _road(spine: np.ndarray, s0: float, s1: float) -> list:
    """Three lanes around ``spine``: centerlines, four dividers and two boundaries."""
    out = []
    for off in (-LANE_WIDTH, 0.0, LANE_WIDTH):
        out.append(("lane_centerline", clip_path(offset_path(spine, off), s0, s1)))
    for off in (-1.5 * LANE_WIDTH, -0.5 * LANE_WIDTH, 0.5 * LANE_WIDTH, 1.5 * LANE_WIDTH):
        out.append(("lane_divider", clip_path(offset_path(spine, off), s0, s1)))
    for off in (-ROAD_HALF_WIDTH, ROAD_HALF_WIDTH):
        out.append(("road_boundary", clip_path(offset_path(spine, off), s0, s1)))
    return out


def _layout(spec: ScenarioSpec, rng: np.random.Generator) -> _Layout:
    v = spec.ego_speed
    horizon = K_STEPS * DT
    back = MAP_BEHIND + 5.0
    s_ego = back
    if spec.kind == "straight":
        spine = build_path([("straight", back + MAP_AHEAD + 60.0)])
        elements = _road(spine, s_ego - MAP_BEHIND, s_ego + MAP_AHEAD)
        if rng.random() < 0.5:
            sc = s_ego + rng.uniform(10.0, 40.0)
            p = point_at_arclength(spine, sc)
            elements.append(("pedestrian_crossing",
                             np.array([p + [0, -ROAD_HALF_WIDTH], p + [0, ROAD_HALF_WIDTH]])))
        lanes = [offset_path(spine, off) for off in (-LANE_WIDTH, 0.0, LANE_WIDTH)]
        return _Layout(spine, s_ego, lanes, elements, "straight")

    radius = 1.0 / abs(spec.curvature)
    if spec.kind in ("left_turn", "right_turn"):
        sign = 1.0 if spec.kind == "left_turn" else -1.0
        # keep the turn close enough that the 3 s ground truth moves > 2 m sideways
        needed = radius * math.acos(1.0 - 2.5 / radius)
        d_turn = rng.uniform(0.0, max(0.0, v * horizon - needed))
        spine = build_path([("straight", back + d_turn), ("arc", radius, sign * math.pi / 2),
                            ("straight", MAP_AHEAD + 40.0)])
        elements = _road(spine, s_ego - MAP_BEHIND, s_ego + MAP_AHEAD)
        lanes = [offset_path(spine, off) for off in (-LANE_WIDTH, 0.0, LANE_WIDTH)]
        return _Layout(spine, s_ego, lanes, elements, "left" if sign > 0 else "right")

    # intersection: two junctions ahead, each with a left and a right branch
    d1 = rng.uniform(3.0, 15.0)
    d2 = d1 + rng.uniform(20.0, 30.0)
    exit_len = 30.0
    straight = build_path([("straight", back + MAP_AHEAD + 60.0)])
    branches = {}
    for j, dj in ((1, d1), (2, d2)):
        for name, sign in (("left", 1.0), ("right", -1.0)):
            branches[(name, j)] = build_path([("straight", back + dj), ("arc", radius, sign * math.pi / 2),
                                              ("straight", exit_len + 40.0)])
    choice = ["straight", ("left", 1), ("right", 1), ("left", 2), ("right", 2)][rng.integers(5)]
    ego_path = straight if choice == "straight" else branches[choice]
    s_j2 = s_ego + d2
    elements = [("lane_centerline", clip_path(straight, s_ego - MAP_BEHIND, s_ego + MAP_AHEAD))]
    for off in (-LANE_WIDTH, LANE_WIDTH):
        elements.append(("lane_centerline",
                         clip_path(offset_path(straight, off), s_ego - MAP_BEHIND, s_ego + MAP_AHEAD)))
    for (name, j), path in branches.items():
        dj = d1 if j == 1 else d2
        arc_end = back + dj + radius * math.pi / 2
        elements.append(("lane_centerline", clip_path(path, s_ego - MAP_BEHIND, arc_end + exit_len)))
        outer = LANE_WIDTH / 2 if name == "right" else -LANE_WIDTH / 2
        elements.append(("lane_divider", clip_path(offset_path(path, outer), arc_end, arc_end + exit_len)))
    for off in (-LANE_WIDTH / 2, LANE_WIDTH / 2):
        elements.append(("lane_divider", clip_path(offset_path(straight, off), s_ego - MAP_BEHIND, s_j2)))
    s_j1 = s_ego + d1
    for off in (-ROAD_HALF_WIDTH, ROAD_HALF_WIDTH):
        elements.append(("road_boundary", clip_path(offset_path(straight, off), s_ego - MAP_BEHIND, s_j1 - 2.0)))
    p = point_at_arclength(straight, s_j1 - 2.0)
    elements.append(("pedestrian_crossing", np.array([p + [0, -ROAD_HALF_WIDTH], p + [0, ROAD_HALF_WIDTH]])))
    lanes = [offset_path(straight, off) for off in (-LANE_WIDTH, 0.0, LANE_WIDTH)]
    maneuver = choice if choice == "straight" else choice[0]
    return _Layout(ego_path, s_ego, lanes, elements, maneuver)


def _boxes_clear(a: list[OrientedBox], b: list[OrientedBox]) -> bool:
    return not any(boxes_overlap(x, y) for x, y in zip(a, b))


def _place_agents(spec: ScenarioSpec, lay: _Layout, rng: np.random.Generator, ego_boxes) -> list:
    """Lane-following constant-speed agents whose boxes (with margin) never touch the
    ego ground truth or each other over the horizon."""
    ego_pos = point_at_arclength(lay.ego_path, lay.s_ego)
    agents, agent_boxes = [], []
    for _ in range(spec.agent_count):
        for _attempt in range(30):
            lane = lay.lanes[rng.integers(len(lay.lanes))]
            s_near = arclength(lane)[int(np.argmin(np.linalg.norm(lane - ego_pos, axis=1)))]
            s_a = s_near + rng.uniform(-20.0, 45.0)
            speed = 0.0 if rng.random() < 0.15 else rng.uniform(2.0, 12.0)
            cat = rng.choice(["car", "car", "car", "car", "truck", "bicycle"])
            length, width = AGENT_SIZES[cat]
            length *= rng.uniform(0.9, 1.1)
            s_steps = s_a + speed * DT * np.arange(K_STEPS + 1)
            pts = point_at_arclength(lane, s_steps)
            heads = heading_at_arclength(lane, s_steps)
            boxes = [OrientedBox(p[0], p[1], h, length, width) for p, h in zip(pts, heads)]
            grown = [OrientedBox(b.cx, b.cy, b.heading, b.length + 1.0, b.width + 1.0) for b in boxes]
            if not _boxes_clear(grown, ego_boxes):
                continue
            if not all(_boxes_clear(grown, other) for other in agent_boxes):
                continue
            agent_boxes.append(boxes)
            h0 = float(heads[0])
            agents.append(dict(pos=pts[0], heading=h0, speed=speed, size=(length, width),
                               future=pts[1:], category=str(cat)))
            break
        else:
            log.warning("scene seed %d: could not place agent, reducing count", spec.seed)
    return agents


def generate_scene(spec: ScenarioSpec, scene_id: str | None = None) -> Scene:
    rng = np.random.default_rng(spec.seed)
    lay = _layout(spec, rng)
    v = spec.ego_speed
    s_steps = lay.s_ego + v * DT * np.arange(K_STEPS + 1)
    ego_pts = point_at_arclength(lay.ego_path, s_steps)
    ego_heads = heading_at_arclength(lay.ego_path, s_steps)
    ego_boxes = [OrientedBox(p[0], p[1], h, EGO_LENGTH, EGO_WIDTH) for p, h in zip(ego_pts, ego_heads)]
    agents = _place_agents(spec, lay, rng, ego_boxes)

    # random world placement so that world and ego frames differ
    theta = rng.uniform(-math.pi, math.pi)
    shift = rng.uniform(-200.0, 200.0, size=2)
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]])

    def world(p):
        return np.asarray(p) @ rot.T + shift

    ego_h = wrap_angle(float(ego_heads[0]) + theta)
    ego = Pose2(*world(ego_pts[0]), ego_h)
    tracks = []
    for a in agents:
        h = wrap_angle(a["heading"] + theta)
        tracks.append(AgentTrack(
            pose=Pose2(*world(a["pos"]), h),
            velocity=(a["speed"] * math.cos(h), a["speed"] * math.sin(h)),
            size=a["size"], future=world(a["future"]), category=a["category"],
        ))
    elements = tuple(MapElement(kind, world(pts)) for kind, pts in lay.elements)
    coarse = clip_path(lay.ego_path, lay.s_ego - 10.0, lay.s_ego + 90.0, spec.route_spacing)
    route = perturb_route(world(coarse), spec.route_sigma[0], spec.route_sigma[1], seed=spec.seed + 1)
    return Scene(
        scene_id=scene_id or f"scene-{spec.seed}",
        ego=ego,
        ego_velocity=(v * math.cos(ego_h), v * math.sin(ego_h)),
        agents=tuple(tracks),
        map=elements,
        route=route,
        ego_gt=to_ego_frame(world(ego_pts[1:]), ego),
        kind=spec.kind,
        maneuver=lay.maneuver,
        meta={"seed": spec.seed, "curvature": spec.curvature, "ego_speed": spec.ego_speed},
    )


@dataclass
class DatasetConfig:
    n_train: int = 512
    n_val: int = 128
    seed: int = 0
    turn_fraction: float = 0.75
    route_sigma: tuple[float, float] = (2.0, 2.0)
    max_agents: int = 6
    radius_range: tuple[float, float] = (15.0, 30.0)

    def kind_fractions(self) -> dict[str, float]:
        f = self.turn_fraction
        return {"straight": 1.0 - f, "left_turn": f / 3, "right_turn": f / 3, "intersection": f / 3}

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclass
class Dataset:
    train: list[Scene] = field(default_factory=list)
    val: list[Scene] = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    def split(self, name: str) -> list[Scene]:
        return {"train": self.train, "val": self.val}[name]


def stratified_counts(n: int, fractions: dict[str, float]) -> dict[str, int]:
    """Largest-remainder apportionment of ``n`` items over ``fractions``."""
    total = sum(fractions.values())
    raw = {k: n * v / total for k, v in fractions.items()}
    counts = {k: int(math.floor(r)) for k, r in raw.items()}
    left = n - sum(counts.values())
    for k in sorted(raw, key=lambda k: (-(raw[k] - counts[k]), list(raw).index(k)))[:left]:
        counts[k] += 1
    return counts


def _specs(n: int, cfg: DatasetConfig, rng: np.random.Generator) -> list[ScenarioSpec]:
    counts = stratified_counts(n, cfg.kind_fractions())
    kinds = [k for k in KINDS for _ in range(counts[k])]
    kinds = [kinds[i] for i in rng.permutation(len(kinds))]
    specs = []
    for kind in kinds:
        radius = rng.uniform(*cfg.radius_range)
        curvature = {"straight": 0.0, "left_turn": 1 / radius, "right_turn": -1 / radius,
                     "intersection": 1 / radius}[kind]
        speed = rng.uniform(4.0, 10.0) if kind in ("straight", "intersection") else rng.uniform(5.0, 10.0)
        specs.append(ScenarioSpec(kind=kind, curvature=curvature,
                                  agent_count=int(rng.integers(0, cfg.max_agents + 1)),
                                  ego_speed=float(speed), seed=int(rng.integers(2**31 - 1)),
                                  route_sigma=tuple(cfg.route_sigma)))
    return specs


def generate_dataset(cfg: DatasetConfig, out_dir: str | Path | None = None) -> Dataset:
    """Stratified train/val scenes; optionally written as JSONL plus a manifest."""
    if cfg.n_train <= 0 or cfg.n_val <= 0:
        raise ValueError("scene counts must be positive")
    rng = np.random.default_rng(cfg.seed)
    ds = Dataset()
    for split, n in (("train", cfg.n_train), ("val", cfg.n_val)):
        scenes = [generate_scene(sp, f"{split}-{i:05d}") for i, sp in enumerate(_specs(n, cfg, rng))]
        setattr(ds, split, scenes)
    ds.manifest = {
        "version": "dataset_v1",
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "counts": {split: {k: sum(s.kind == k for s in ds.split(split)) for k in KINDS}
                   for split in ("train", "val")},
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_jsonl(ds.train, out / "train.jsonl")
        write_jsonl(ds.val, out / "val.jsonl")
        (out / "manifest.json").write_text(json.dumps(ds.manifest, indent=2, sort_keys=True) + "\n")
    return ds


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text()) if (path / "manifest.json").exists() else {}
    return Dataset(train=read_jsonl(path / "train.jsonl"), val=read_jsonl(path / "val.jsonl"), manifest=manifest)


def is_turning(scene: Scene, threshold: float = TURNING_THRESHOLD) -> bool:
    return lateral_displacement(scene.ego_gt) > threshold


def turning_subset(scenes: list[Scene], threshold: float = TURNING_THRESHOLD) -> list[Scene]:
    """Scenes whose ground truth moves more than ``threshold`` metres sideways."""
    return [s for s in scenes if is_turning(s, threshold)]
