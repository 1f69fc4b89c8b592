import numpy as np
import pytest
from sklearn.base import clone

from ofd.evaluation import mc_volume
from ofd.exceptions import NoFeasiblePoints, NonpositiveBeta, RowInfeasible
from ofd.flex_design import (DesignResult, FlexibilityDesigner, compute_prototype, farkas_design,
                             volume_scale)
from ofd.market_model import HorizonConfig, HPolytope, aggregator_polytope, build_G
from ofd.opt_core import LinearProgram, solve_lp
from ofd.poly_geom import certify_containment

from conftest import dykstra_pgd, monolithic_beta

H2 = HorizonConfig(2)
G2 = build_G(H2)


def random_instance(rng, m=None):
    m = m or int(rng.integers(3, 51))
    U = rng.normal(size=(m, 2))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    E = U * rng.uniform(0.5, 2.0, (m, 1))
    center = rng.normal(size=2) * 0.3
    d = E @ center + rng.uniform(0.2, 1.0, m)
    pts = rng.normal(size=(20, 2))
    x_bar = compute_prototype(pts, -np.ones(20), G2)
    return x_bar, HPolytope(E, d)


def test_prototype_example():
    pts = np.array([[0.4, -0.2], [-0.1, 0.3]])
    x_bar = compute_prototype(pts, [-1, -1], G2)
    assert np.allclose(x_bar, [0.4, 0.3, 0.1, 0.2, 0.4, 0.2, 0.1, 0.0, 0.4, 0.6])


def test_prototype_zero_and_infeasible_ignored():
    x = compute_prototype(np.array([[0.0, 0.0], [5.0, 5.0]]), [-1, 1], G2)
    assert np.all(x == 0)
    with pytest.raises(NoFeasiblePoints):
        compute_prototype(np.ones((3, 2)), [1, 1, 1], G2)


@pytest.mark.parametrize("seed", range(10))
def test_prototype_matches_pgd(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(8, 2))
    y = np.where(rng.random(8) < 0.7, -1, 1)
    y[0] = -1
    x = compute_prototype(pts, y, G2)
    ref = dykstra_pgd(pts[y == -1] @ G2.T)
    assert np.max(np.abs(x - ref)) <= 1e-8
    assert np.all(G2 @ pts[y == -1].T <= x[:, None] + 1e-12)


def test_t1_toy():
    G = np.array([[1.0], [-1.0]])
    P_D = HPolytope(G, np.array([0.5, 0.5]))
    res = farkas_design(np.array([1.0, 1.0]), G, P_D)
    assert res.beta_star == pytest.approx(2.0)
    assert np.allclose(res.h, [1.0, 1.0]) and np.allclose(res.z_star, 0.0)
    assert np.allclose(res.x_star, [0.5, 0.5])


def test_homothety():
    rng = np.random.default_rng(0)
    x_bar = compute_prototype(rng.normal(size=(30, 2)), -np.ones(30), G2)
    res = farkas_design(x_bar, G2, HPolytope(G2, x_bar / 2))
    assert res.beta_star == pytest.approx(2.0, abs=1e-9)
    assert np.allclose(res.x_star, x_bar / 2, atol=1e-9)


@pytest.mark.parametrize("seed", range(15))
def test_matches_monolithic(seed):
    rng = np.random.default_rng(seed)
    x_bar, P_D = random_instance(rng)
    res = farkas_design(x_bar, G2, P_D)
    assert res.beta_star == pytest.approx(monolithic_beta(x_bar, G2, P_D.A, P_D.b), abs=1e-6)
    assert certify_containment(aggregator_polytope(res.x_star, H2), P_D)[0]
    assert np.allclose(res.x_star, (x_bar - G2 @ res.z_star) / res.beta_star)


def test_beta_is_optimal():
    rng = np.random.default_rng(7)
    x_bar, P_D = random_instance(rng, 20)
    res = farkas_design(x_bar, G2, P_D)
    b = 0.99 * res.beta_star
    lp = LinearProgram(np.zeros(2), -P_D.A, "<=", -(res.h - b * P_D.b), np.full(2, -np.inf))
    assert not solve_lp(lp, backend="highs").optimal


def test_shift_scale_property():
    rng = np.random.default_rng(8)
    x_bar, P_D = random_instance(rng, 12)
    res = farkas_design(x_bar, G2, P_D)
    P_bar, P_star = aggregator_polytope(x_bar, H2), aggregator_polytope(res.x_star, H2)
    lo, hi = -3, 3
    pts = rng.uniform(lo, hi, (20_000, 2))
    inside = pts[P_bar.contains(pts)][:1000]
    assert len(inside) > 50
    mapped = (inside - res.z_star) / res.beta_star
    assert np.all(P_star.contains(mapped, tol=1e-9))


def test_volume_scale():
    assert volume_scale(5.0, 1.0, 4) == 5.0
    assert volume_scale(8.0, 2.0, 3) == 1.0
    with pytest.raises(NonpositiveBeta):
        volume_scale(1.0, 0.0, 2)


def test_volume_ratio_by_monte_carlo():
    rng = np.random.default_rng(9)
    x_bar, P_D = random_instance(rng, 10)
    res = farkas_design(x_bar, G2, P_D)
    vb = mc_volume(aggregator_polytope(x_bar, H2), 200_000, seed=1)
    vs = mc_volume(aggregator_polytope(res.x_star, H2), 200_000, seed=2)
    pred = vb.estimate / res.beta_star ** 2
    sig = np.hypot(vb.std_error / res.beta_star ** 2, vs.std_error)
    assert abs(pred - vs.estimate) <= 3 * sig


def test_row_infeasible():
    G = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])  # -e2 is not in the cone of rows
    x_bar = np.array([1.0, 1.0, 1.0])
    box = HPolytope(np.vstack([np.eye(2), -np.eye(2)]), np.ones(4))
    with pytest.raises(RowInfeasible):
        farkas_design(x_bar, G, box)


def test_design_json_roundtrip(tmp_path):
    rng = np.random.default_rng(10)
    x_bar, P_D = random_instance(rng, 8)
    res = farkas_design(x_bar, G2, P_D)
    res.save(tmp_path / "d.json")
    back = DesignResult.load(tmp_path / "d.json")
    assert np.array_equal(back.x_star, res.x_star) and back.beta_star == res.beta_star


def test_estimator_on_hexagon():
    from ofd.market_model import AggregatorModelVars, build_x
    x = build_x(AggregatorModelVars.uniform(2, 1, -1, 0.5, 1, 0, 1, -1), H2)
    F = aggregator_polytope(x, H2)
    rng = np.random.default_rng(11)
    X = rng.uniform(-0.8, 0.8, (300, 2))
    y = np.where(F.contains(X), -1, 1)
    est = FlexibilityDesigner(horizon=H2, epochs=200)
    assert clone(est).get_params()["delta"] == 0.1
    est.fit(X, y)
    assert certify_containment(est.polytope_, est.P_D_)[0]
    pred = est.predict(X)
    # P(x*) sits inside the learned set, so it rarely accepts infeasible points
    assert np.mean(pred[y == 1] == -1) <= 0.05
    assert np.all(F.contains(X[pred == -1], tol=0.05))
