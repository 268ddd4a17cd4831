import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ntt.geometry import arclength, nearest_point_on_polyline
from ntt.navpath import (NavWindow, ego_in_window_frame, interpolate_route, node_matrix, perturb_route,
                         route_command, select_window, vectorize_window)


def test_interpolate_straight():
    out = interpolate_route([(0, 0), (20, 0)], 5)
    assert np.allclose(out, [(0, 0), (5, 0), (10, 0), (15, 0), (20, 0)])


def test_interpolate_absorbs_interior_vertex():
    assert np.allclose(interpolate_route([(0, 0), (3, 0), (10, 0)], 5), [(0, 0), (5, 0), (10, 0)])


def test_interpolate_l_shape():
    out = interpolate_route([(0, 0), (6, 0), (6, 6)], 5)
    assert np.allclose(out, [(0, 0), (5, 0), (6, 4)])
    chords = np.linalg.norm(np.diff(out, axis=0), axis=1)
    assert chords[0] == pytest.approx(5) and chords[1] < 5


def test_interpolate_drops_partial_tail_and_errors():
    assert len(interpolate_route([(0, 0), (12, 0)], 5)) == 3
    with pytest.raises(ValueError, match="route too short"):
        interpolate_route([(0, 0), (4, 0)], 5)


def _arclength_of(points, line):
    # arclength position of each point along ``line`` via its projection
    cum = arclength(line)
    out = []
    for p in points:
        foot, _, seg = nearest_point_on_polyline(line, p)
        out.append(cum[seg] + np.linalg.norm(foot - line[seg]))
    return np.array(out)


routes = arrays(np.float64, (6, 2), elements=st.floats(-5, 5)).map(
    lambda a: np.cumsum(a + np.array([8.0, 0.0]), axis=0))


@given(routes)
@settings(max_examples=60, deadline=None)
def test_interpolated_spacing_exact(route):
    out = interpolate_route(route, 5.0)
    s = _arclength_of(out, route)
    assert np.allclose(np.diff(s), 5.0, atol=1e-9)
    assert np.all(np.linalg.norm(np.diff(out, axis=0), axis=1) <= 5.0 + 1e-9)


def test_select_window_examples():
    route = np.stack([np.arange(0, 60, 5.0), np.zeros(12)], axis=1)
    w = select_window(route, (0.4, 0.2), 2)
    assert np.allclose(w.points, [(0, 0), (5, 0), (10, 0)]) and not w.padded
    tie = select_window(route, (2.5, 0.0), 2)
    assert tie.start_index == 0
    beyond = select_window(route, (200, 0), 3)
    assert beyond.padded and np.allclose(beyond.points[-1], (70, 0))


@given(arrays(np.float64, (15, 2), elements=st.floats(-50, 50)), st.floats(-60, 60), st.floats(-60, 60))
@settings(max_examples=80, deadline=None)
def test_select_window_start_is_nearest(route, ex, ey):
    # make consecutive vertices distinct so padding is well defined
    route = route + np.arange(15)[:, None] * 1e-3
    w = select_window(route, (ex, ey), 4)
    d = np.linalg.norm(route - [ex, ey], axis=1)
    assert d[w.start_index] == d.min()
    assert w.start_index == int(np.flatnonzero(d == d.min())[0])
    assert len(w.points) == 5


def test_vectorize_examples():
    (n,) = vectorize_window(NavWindow(np.array([(0, 0), (3, 4)], dtype=float)))
    assert np.allclose(n.d, (3, 4)) and n.cos_h == pytest.approx(0.6) and n.sin_h == pytest.approx(0.8)
    nodes = vectorize_window(NavWindow(np.array([(0, 0), (5, 0), (10, 0)], dtype=float)))
    assert all(np.allclose(x.features(), [5, 0, 1, 0]) for x in nodes)
    (n,) = vectorize_window(NavWindow(np.array([(0, 0), (0, 5)], dtype=float)))
    assert n.cos_h == pytest.approx(0, abs=1e-15) and n.sin_h == 1


def test_vectorize_duplicate_vertices():
    with pytest.raises(ValueError, match="duplicate navigation vertices"):
        vectorize_window(NavWindow(np.array([(0, 0), (0, 0), (1, 0)], dtype=float)))


@given(arrays(np.float64, (11, 2), elements=st.floats(-100, 100)), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
@settings(max_examples=80)
def test_node_invariants(pts, tx, ty):
    pts = pts + np.arange(11)[:, None] * 0.5
    nodes = vectorize_window(NavWindow(pts))
    assert len(nodes) == 10
    for n in nodes:
        assert abs(n.cos_h ** 2 + n.sin_h ** 2 - 1) < 1e-9
    rebuilt = pts[0] + np.cumsum([n.d for n in nodes], axis=0)
    assert np.array_equal(rebuilt[-1] - pts[0], np.sum(np.diff(pts, axis=0), axis=0)) or np.allclose(rebuilt, pts[1:])
    # translating the window by an offset representable without rounding keeps features exact
    shift = np.array([np.round(tx), np.round(ty)]) * 1024
    moved = node_matrix(vectorize_window(NavWindow(pts + shift)))
    assert np.allclose(moved, node_matrix(nodes), atol=1e-9)


def test_translation_invariance_exact():
    pts = np.array([(0, 0), (5, 1), (9, 4), (12, 9)], dtype=float)
    a = node_matrix(vectorize_window(NavWindow(pts)))
    b = node_matrix(vectorize_window(NavWindow(pts + [64.0, -128.0])))
    assert np.array_equal(a, b)


def test_ego_in_window_frame():
    w = NavWindow(np.array([(1, 1), (1, 6), (1, 11)], dtype=float))
    assert np.allclose(ego_in_window_frame(w), [-1, 1])


def test_route_command():
    straight = NavWindow(np.array([(i * 5.0, 0.0) for i in range(11)]))
    assert route_command(straight) == "straight"
    ang = np.radians(np.linspace(0, 60, 11))
    left = NavWindow(np.stack([20 * np.sin(ang), 20 * (1 - np.cos(ang))], axis=1))
    assert route_command(left) == "left"
    right = NavWindow(left.points * [1, -1])
    assert route_command(right) == "right"


def test_perturb_identity_and_determinism():
    route = np.stack([np.arange(0, 100, 10.0), np.zeros(10)], axis=1)
    assert np.array_equal(perturb_route(route, 0, 0, seed=1), route)
    assert np.array_equal(perturb_route(route, seed=7), perturb_route(route, seed=7))
    assert not np.array_equal(perturb_route(route, seed=7), perturb_route(route, seed=8))
    with pytest.raises(ValueError):
        perturb_route(route, -1.0, 0.0)


def test_perturb_lateral_std():
    # along +x the lateral axis is y and the along-track axis is x
    route = np.stack([np.arange(10_000) * 5.0, np.zeros(10_000)], axis=1)
    out = perturb_route(route, lateral_sigma=2.0, along_sigma=0.0, seed=0)
    lat = out[:, 1]
    assert abs(lat.std(ddof=1) - 2.0) < 0.1
    assert np.array_equal(out[:, 0], route[:, 0])


def test_perturb_local_frame_on_rotated_route():
    h = math.radians(30)
    route = np.stack([np.arange(2000) * 5.0 * math.cos(h), np.arange(2000) * 5.0 * math.sin(h)], axis=1)
    out = perturb_route(route, lateral_sigma=0.0, along_sigma=1.0, seed=3)
    delta = out - route
    normal = np.array([-math.sin(h), math.cos(h)])
    assert np.allclose(delta @ normal, 0, atol=1e-9)
