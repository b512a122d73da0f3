import numpy as np
import pytest

from hierdrive import geometry as geo

from oracles import mc_boxes_overlap


def test_nearest_on_polyline_matches_segment_scan():
    rng = np.random.default_rng(0)
    for _ in range(50):
        pts = np.cumsum(rng.normal(size=(8, 2)), axis=0)
        p = rng.normal(scale=3.0, size=2)
        q, d, tang = geo.nearest_on_polyline(p, pts)
        brute = min(
            (geo.point_segment_info(p, a, b)[1] for a, b in zip(pts[:-1], pts[1:])),
        )
        assert d == pytest.approx(brute, abs=1e-9)
        assert np.linalg.norm(tang) == pytest.approx(1.0)


def test_resample_polyline_uniform_spacing():
    pts = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 5.0]])
    out = geo.resample_polyline(pts, 16)
    d = np.linalg.norm(np.diff(out, axis=0), axis=1)
    assert out.shape == (16, 2)
    assert np.allclose(d, d[0], atol=1e-9)
    assert np.allclose(out[0], pts[0]) and np.allclose(out[-1], pts[-1])


def test_menger_curvature_of_circle_points():
    r = 7.0
    for angles in ([0.1, 0.5, 1.2], [2.0, 2.2, 2.9]):
        p1, p2, p3 = (np.array([r * np.cos(a), r * np.sin(a)]) for a in angles)
        assert geo.menger_curvature(p1, p2, p3) == pytest.approx(1.0 / r, rel=1e-9)
    # collinear -> zero
    assert geo.menger_curvature(np.zeros(2), np.array([1.0, 0]), np.array([2.0, 0])) == 0.0


def test_wrap_angle():
    assert geo.wrap_angle(np.pi) == pytest.approx(np.pi)
    assert geo.wrap_angle(-np.pi) == pytest.approx(np.pi)
    assert geo.wrap_angle(3 * np.pi / 2) == pytest.approx(-np.pi / 2)
    vals = geo.wrap_angle(np.linspace(-10, 10, 101))
    assert np.all(vals <= np.pi) and np.all(vals > -np.pi)


def test_obb_corners_consistent_with_containment():
    box = [2.0, -1.0, 0.7, 4.0, 2.0]
    corners = geo.obb_corners(*box)
    inner = corners * 0.999 + np.array(box[:2]) * 0.001
    assert np.all(geo.point_in_obb(inner, box))
    outer = (corners - np.array(box[:2])) * 1.01 + np.array(box[:2])
    assert not np.any(geo.point_in_obb(outer, box))


def test_boxes_overlap_simple_cases():
    a = [0.0, 0.0, 0.0, 4.0, 2.0]
    assert geo.boxes_overlap(a, [0.0, 0.0, 1.0, 2.0, 1.0])  # concentric
    assert geo.boxes_overlap(a, [3.9, 0.0, 0.0, 4.0, 2.0])  # side overlap
    assert not geo.boxes_overlap(a, [10.0, 0.0, 0.0, 4.0, 2.0])
    assert not geo.boxes_overlap(a, [3.0, 3.0, np.pi / 4, 2.0, 1.0])


def test_boxes_overlap_against_monte_carlo():
    rng = np.random.default_rng(9)
    checked = 0
    for trial in range(60):
        a = np.array([rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-np.pi, np.pi),
                      rng.uniform(1, 5), rng.uniform(0.8, 2.5)])
        b = np.array([rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-np.pi, np.pi),
                      rng.uniform(1, 5), rng.uniform(0.8, 2.5)])
        flags, margins = geo.boxes_overlap_many(a[None], b[None])
        if abs(margins[0]) < 0.01:  # tangency band excluded
            continue
        assert flags[0] == mc_boxes_overlap(a, b, 4000, rng), (a, b)
        checked += 1
    assert checked > 40


def test_headings_along():
    plan = np.array([[1.0, 0.0], [2.0, 1.0], [2.0, 1.0]])
    h = geo.headings_along(plan)
    assert h[0] == pytest.approx(0.0)
    assert h[1] == pytest.approx(np.pi / 4)
    assert h[2] == pytest.approx(np.pi / 4)  # stationary step reuses heading


def test_chamfer_distance_symmetric_zero():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(12, 2))
    assert geo.chamfer_distance(a, a) == pytest.approx(0.0)
    b = rng.normal(size=(9, 2))
    assert geo.chamfer_distance(a, b) == pytest.approx(geo.chamfer_distance(b, a))
