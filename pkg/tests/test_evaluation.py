import math

import numpy as np
import pytest

from ofd.classifier import Ellipsoid
from ofd.dataset_gen import box_polytope
from ofd.disagg import ChanceLabeler, PolytopeDisaggregator
from ofd.evaluation import (bounding_box, ellipse_boundary, hull_membership, mc_volume, metric_M1,
                            metric_M2, polygon_vertices, sample_hull, write_points_csv,
                            write_polyline_csv)
from ofd.exceptions import InvalidCount, SingleClassDataset, UnboundedPolytope
from ofd.market_model import (AggregatorModelVars, HorizonConfig, HPolytope, aggregator_polytope,
                              build_x)

H2 = HorizonConfig(2)
HEX = aggregator_polytope(build_x(AggregatorModelVars.uniform(2, 1, -1, 0.5, 1, 0, 1, -1), H2), H2)


def simplex(T):
    return HPolytope(np.vstack([-np.eye(T), np.ones((1, T))]), np.r_[np.zeros(T), 1.0])


def test_bounding_box_examples():
    lo, hi = bounding_box(box_polytope([0, 0], [1, 1]))
    assert np.allclose(lo, 0) and np.allclose(hi, 1)
    lo, hi = bounding_box(simplex(3))
    assert np.allclose(lo, 0) and np.allclose(hi, 1)
    # power limits alone give [-1, 1]^2; the storage rows tighten it
    lo, hi = bounding_box(aggregator_polytope(np.ones(4), H2, reduced=True))
    assert np.allclose(lo, -1) and np.allclose(hi, 1)
    lo, hi = bounding_box(HEX)
    assert np.allclose(lo, [-0.5, -0.75]) and np.allclose(hi, [0.5, 0.75])


def test_bounding_box_tight_on_hexagon():
    lo, hi = bounding_box(HEX)
    V = polygon_vertices(HEX)
    assert np.allclose(V.min(0), lo, atol=1e-8) and np.allclose(V.max(0), hi, atol=1e-8)
    lo2, hi2 = bounding_box(HEX, backend="highs")
    assert np.allclose(lo, lo2) and np.allclose(hi, hi2)


def test_bounding_box_unbounded():
    with pytest.raises(UnboundedPolytope):
        bounding_box(HPolytope(np.array([[1.0, 0.0]]), np.array([1.0])))


def test_cube_exact():
    v = mc_volume(box_polytope(np.zeros(3), np.ones(3)), 10_000, seed=0)
    assert v.estimate == 1.0 and v.std_error == 0.0


@pytest.mark.parametrize("T", [2, 3])
def test_simplex_volume(T):
    v = mc_volume(simplex(T), 200_000, seed=T)
    assert abs(v.estimate - 1 / math.factorial(T)) <= 3 * v.std_error


@pytest.mark.parametrize("t", [0.25, 0.5, 0.75])
def test_slice_unbiased(t):
    P = HPolytope(np.vstack([np.eye(2), -np.eye(2), [[1.0, 0.0]]]), np.r_[1, 1, 0, 0, t])
    v = mc_volume(P, 100_000, seed=1, box=(np.zeros(2), np.ones(2)))
    assert abs(v.estimate - t) <= 3 * v.std_error


def test_mc_deterministic_and_count():
    a, b = mc_volume(HEX, 10_000, seed=4), mc_volume(HEX, 10_000, seed=4)
    assert a.estimate == b.estimate
    with pytest.raises(InvalidCount):
        mc_volume(HEX, 0)


def test_hexagon_area():
    v = mc_volume(HEX, 400_000, seed=2)
    assert abs(v.estimate - 0.875) <= 3 * v.std_error


TRI = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def test_M1_examples():
    assert hull_membership(TRI, [0.3, 0.3]) and not hull_membership(TRI, [1.0, 1.0])
    pts = np.vstack([TRI, [[0.3, 0.3], [1.0, 1.0]]])
    lab = np.array([-1, -1, -1, 1, 1])
    assert metric_M1(pts, lab) == 0.5
    dup = np.vstack([pts, TRI])
    assert metric_M1(dup, np.r_[lab, -1, -1, -1]) == 0.5
    assert metric_M1(np.vstack([TRI, TRI]), [-1, -1, -1, 1, 1, 1]) == 1.0
    with pytest.raises(SingleClassDataset):
        metric_M1(TRI, [-1, -1, -1])


def hex_labeler():
    return ChanceLabeler(PolytopeDisaggregator(HEX), 1, 0.0)


def test_M2_convex_set_is_zero():
    rng = np.random.default_rng(0)
    X = rng.uniform(-0.8, 0.8, (200, 2))
    y = np.where(HEX.contains(X), -1, 1)
    r = metric_M2(X, y, hex_labeler(), I=30, seed=1)
    assert r.value == 0.0 and r.points.shape == (30, 2)


def test_M2_single_point():
    lab = hex_labeler()
    r = metric_M2(np.array([[0.0, 0.0], [2.0, 2.0]]), [-1, 1], lab, I=3)
    assert r.value == 0.0
    r = metric_M2(np.array([[0.9, 0.9], [2.0, 2.0]]), [-1, 1], lab, I=3)
    assert r.value == 1.0


def test_M2_invalid_count():
    with pytest.raises(InvalidCount):
        metric_M2(TRI, [-1, -1, 1], hex_labeler(), I=0)


def test_hull_samples_inside():
    S = sample_hull(TRI, 20, seed=3)
    assert all(hull_membership(TRI, s, tol=1e-9) for s in S)
    # the centroid of uniform samples is the triangle centroid
    S = sample_hull(TRI, 200, seed=4, burn_in=4)
    assert np.allclose(S.mean(0), [1 / 3, 1 / 3], atol=0.08)
    D = sample_hull(TRI, 10, seed=5, mode="dirichlet")
    assert D.shape == (10, 2)
    with pytest.raises(ValueError):
        sample_hull(TRI, 1, mode="bogus")


def test_polygon_and_csv(tmp_path):
    V = polygon_vertices(HEX)
    assert len(V) == 6
    area = 0.5 * abs(np.sum(V[:, 0] * np.roll(V[:, 1], -1) - np.roll(V[:, 0], -1) * V[:, 1]))
    assert area == pytest.approx(0.875)
    B = ellipse_boundary(Ellipsoid(np.eye(2), np.zeros(2), -1.0), 50)
    assert np.allclose(np.linalg.norm(B, axis=1), 1.0)
    write_polyline_csv(tmp_path / "b.csv", {"hex": V, "ball": B})
    write_points_csv(tmp_path / "p.csv", V, -np.ones(6, int))
    assert (tmp_path / "b.csv").read_text().count("\n") > 50
