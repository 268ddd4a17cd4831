import numpy as np
import pytest

from ntt.geometry import Pose2
from ntt.scene import (AgentTrack, MapElement, PlannedTrajectory, Scene, read_jsonl, scene_from_dict,
                       scene_to_dict, write_jsonl)


def _scene(**kw):
    base = dict(scene_id="s", ego=Pose2(1, 2, 0.3), ego_velocity=(5.0, 0.0), agents=(),
                map=(MapElement("lane_centerline", [(0, 0), (10, 0)]),),
                route=[(0, 0), (50, 0)], ego_gt=np.zeros((6, 2)))
    base.update(kw)
    return Scene(**base)


def test_scene_requires_k_points():
    with pytest.raises(ValueError):
        _scene(ego_gt=np.zeros((5, 2)))


def test_scene_requires_centerline_or_flag():
    with pytest.raises(ValueError):
        _scene(map=())
    assert _scene(map=(), no_centerline=True).no_centerline


def test_map_element_kind_checked():
    with pytest.raises(ValueError):
        MapElement("crosswalk", [(0, 0), (1, 0)])


def test_agent_future_length_checked():
    with pytest.raises(ValueError):
        AgentTrack(Pose2(0, 0, 0), (1, 0), (4, 2), np.zeros((4, 2)))


def test_planned_trajectory_finite():
    with pytest.raises(ValueError):
        PlannedTrajectory(np.full((6, 2), np.nan))


def test_jsonl_round_trip_exact(tmp_path, tiny_dataset):
    path = tmp_path / "s.jsonl"
    write_jsonl(tiny_dataset.train, path)
    back = read_jsonl(path)
    assert [scene_to_dict(s) for s in back] == [scene_to_dict(s) for s in tiny_dataset.train]
    write_jsonl(back, tmp_path / "t.jsonl")
    assert path.read_bytes() == (tmp_path / "t.jsonl").read_bytes()


def test_version_checked(tiny_dataset):
    d = scene_to_dict(tiny_dataset.train[0])
    d["version"] = "scene_v0"
    with pytest.raises(ValueError):
        scene_from_dict(d)


def test_elements_in_ego_frame():
    s = _scene(ego=Pose2(10, 0, 0))
    (line,) = s.elements("lane_centerline")
    assert np.allclose(line, [(-10, 0), (0, 0)])
