import numpy as np
import pytest

from ntt.geometry import EGO_LENGTH, EGO_WIDTH, OrientedBox, boxes_overlap, lateral_displacement, nearest_point_on_polyline, to_ego_frame
from ntt.scene import read_jsonl, scene_to_dict
from ntt.simworld import (KINDS, DatasetConfig, ScenarioSpec, generate_dataset, generate_scene, is_turning,
                          stratified_counts, turning_subset)


def test_straight_constant_velocity():
    s = generate_scene(ScenarioSpec("straight", ego_speed=5.0, seed=1))
    expect = np.stack([2.5 * np.arange(1, 7), np.zeros(6)], axis=1)
    assert np.allclose(s.ego_gt, expect, atol=1e-9)


def test_left_turn_is_turning():
    for seed in range(5):
        s = generate_scene(ScenarioSpec("left_turn", curvature=1 / 20, ego_speed=8.0, seed=seed))
        assert lateral_displacement(s.ego_gt) > 2.0
        assert s.ego_gt[-1, 1] > 0
    r = generate_scene(ScenarioSpec("right_turn", curvature=-1 / 20, ego_speed=8.0, seed=0))
    assert r.ego_gt[-1, 1] < -2.0


def test_spec_validation():
    with pytest.raises(ValueError):
        ScenarioSpec("straight", curvature=0.1)
    with pytest.raises(ValueError):
        ScenarioSpec("left_turn")
    with pytest.raises(ValueError):
        ScenarioSpec("roundabout")
    with pytest.raises(ValueError):
        ScenarioSpec("straight", ego_speed=0.0)


def test_scene_determinism():
    spec = ScenarioSpec("intersection", curvature=1 / 18, agent_count=4, seed=9)
    a, b = generate_scene(spec), generate_scene(spec)
    assert scene_to_dict(a) == scene_to_dict(b)


def test_stratified_counts():
    assert stratified_counts(100, {k: 0.25 for k in KINDS}) == {k: 25 for k in KINDS}
    c = stratified_counts(7, {"a": 1, "b": 1, "c": 1})
    assert sum(c.values()) == 7 and max(c.values()) - min(c.values()) <= 1


def test_dataset_counts_and_bytes(tmp_path):
    cfg = DatasetConfig(n_train=20, n_val=8, seed=4, turn_fraction=0.75)
    ds = generate_dataset(cfg, tmp_path / "a")
    generate_dataset(cfg, tmp_path / "b")
    for f in ("train.jsonl", "val.jsonl", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert ds.manifest["counts"]["train"] == {"straight": 5, "left_turn": 5, "right_turn": 5, "intersection": 5}
    assert [scene_to_dict(s) for s in read_jsonl(tmp_path / "a" / "val.jsonl")] == [scene_to_dict(s) for s in ds.val]
    assert not {s.scene_id for s in ds.train} & {s.scene_id for s in ds.val}
    with pytest.raises(ValueError):
        generate_dataset(DatasetConfig(n_train=0))


def test_turning_subset_brute_force(tiny_dataset):
    scenes = tiny_dataset.train + tiny_dataset.val
    ref = []
    for s in scenes:
        # ego frame has x along the initial heading, so lateral offset is |y|
        if max(abs(y) for _, y in s.ego_gt) > 2.0:
            ref.append(s.scene_id)
    assert [s.scene_id for s in turning_subset(scenes)] == ref
    assert all(s.kind != "straight" for s in turning_subset(scenes))
    straight = [s for s in scenes if s.kind == "straight"]
    assert turning_subset(straight) == []


def test_turning_threshold_is_strict():
    s = generate_scene(ScenarioSpec("straight", seed=0))
    s.ego_gt[:, 1] = 0.0
    s.ego_gt[-1, 1] = 2.0
    assert not is_turning(s)
    s.ego_gt[-1, 1] = 2.0 + 1e-9
    assert is_turning(s)


def test_generated_scenes_valid(tiny_dataset):
    for s in tiny_dataset.train:
        assert s.ego_gt.shape == (6, 2)
        ego = [OrientedBox(0.0, 0.0, 0.0, EGO_LENGTH, EGO_WIDTH)]
        for a in s.agents:
            assert a.future.shape == (6, 2)
            pos = to_ego_frame(np.array([[a.pose.x, a.pose.y]]), s.ego)[0]
            box = OrientedBox(pos[0], pos[1], a.pose.heading - s.ego.heading, *a.size)
            assert not boxes_overlap(ego[0], box)
        # ground truth keeps clear of road boundaries
        bds = [to_ego_frame(b, s.ego) for b in s.elements("road_boundary")]
        for p in s.ego_gt:
            assert min(nearest_point_on_polyline(b, p)[1] for b in bds) > 0.5
        route = s.route
        assert np.linalg.norm(np.diff(route, axis=0), axis=1).sum() >= 50
