import itertools

import numpy as np
import pytest

from ofd.devices import (BatterySlice, DeviceSpec, PVSlice, Scenario, sample_fleet, sample_pool,
                         verify_schedule)
from ofd.disagg import (FEASIBLE, INFEASIBLE, ChanceLabeler, FleetDisaggregator,
                        PolytopeDisaggregator, chance_statistic, draw_scenarios, g_tolerance,
                        label, solve_disaggregation, verify_disaggregation, _FleetProblem)
from ofd.market_model import (AggregatorModelVars, HorizonConfig, HPolytope, aggregator_polytope,
                              build_x)
from ofd.opt_core import Status, solve_lp

H2 = HorizonConfig(2)
PV1 = [DeviceSpec("PV", 4.0)]
SUN = Scenario((PVSlice(np.ones(8)),))


def test_pv_saturating():
    res = solve_disaggregation(np.array([-4.0, -4.0]), SUN, PV1, H2)
    assert res.g_value <= g_tolerance([-4, -4])
    assert np.allclose(res.device_schedules[0].loads, -4.0)


def test_pv_cannot_consume():
    res = solve_disaggregation(np.array([1.0, 0.0]), SUN, PV1, H2)
    assert res.g_value == pytest.approx(1.0)


def enumerate_g(prob: _FleetProblem, p):
    m = prob.milp(p)
    bins = list(m.binary_indices)
    best = np.inf
    for pattern in itertools.product((0.0, 1.0), repeat=len(bins)):
        lo, hi = m.base.lo.copy(), m.base.hi.copy()
        lo[bins] = pattern
        hi[bins] = pattern
        r = solve_lp(m.base.with_bounds(lo, hi), backend="highs")
        if r.status is Status.OPTIMAL:
            best = min(best, r.objective)
    return best


@pytest.mark.parametrize("seed", range(3))
def test_two_battery_enumeration(seed):
    # T=1 keeps the pattern count at 2^8
    h = HorizonConfig(1)
    rng = np.random.default_rng(seed)
    fleet = [DeviceSpec("Battery", 3.0, 4.0), DeviceSpec("Battery", 2.0, 2.0)]
    sc = Scenario((BatterySlice(float(rng.uniform(0, 4))), BatterySlice(float(rng.uniform(0, 2)))))
    prob = _FleetProblem(fleet, sc, h)
    p = rng.uniform(-8, 8, 1)
    res = prob.solve(p, backend="bnb")
    assert res.g_value == pytest.approx(enumerate_g(prob, p), abs=1e-6)
    assert verify_disaggregation(res, sc, fleet, h)


def test_fleet_solutions_verified():
    h = HorizonConfig(2, start_hour=10.0)
    fleet = sample_fleet({"PV": 2, "Battery": 2, "EV": 2, "TCL": 2}, 4)
    pool = sample_pool(fleet, h, 4, 1)
    D = FleetDisaggregator(fleet, h, pool)
    rng = np.random.default_rng(0)
    lo, hi = D.hour_bounds(0)
    for i in range(12):
        p = rng.uniform(lo.sum(0), hi.sum(0))
        res = D.disaggregate(p, i % 4)
        assert verify_disaggregation(res, pool[i % 4], fleet, h)
        assert res.g_value == pytest.approx(np.abs(p - res.p_hat).sum(), abs=1e-6)
        # the projection disaggregates under its own scenario
        again = D.disaggregate(res.p_hat, i % 4)
        assert again.g_value <= g_tolerance(res.p_hat)


def test_g_homogeneous_in_mismatch():
    P = HPolytope(np.vstack([np.eye(2), -np.eye(2)]), np.ones(4))
    D = PolytopeDisaggregator(P)
    assert D.disaggregate(np.array([2.0, 0.0])).g_value == pytest.approx(1.0)
    assert D.disaggregate(np.array([3.0, 0.0])).g_value == pytest.approx(2.0)


class _Fixed:
    """Disaggregator whose mismatch per scenario is given in advance."""

    def __init__(self, g):
        self.g = np.asarray(g, float)
        self.T = 1

    @property
    def n_scenarios(self):
        return self.g.size

    def disaggregate(self, p, k):
        from ofd.disagg import DisaggResult
        return DisaggResult(float(self.g[k]), np.array([float(k)]))


def test_chance_statistic_examples():
    assert chance_statistic([0.0], _Fixed(np.zeros(25)), range(25)) == 1.0
    g = np.zeros(25)
    g[3] = 1.0
    assert chance_statistic([0.0], _Fixed(g), range(25)) == pytest.approx(0.96)
    assert label([0.0], _Fixed(g), range(25), eps=0.04).y == FEASIBLE
    assert label([0.0], _Fixed(g), range(25), eps=0.0).y == INFEASIBLE


def test_threshold_arithmetic():
    g = np.zeros(25)
    g[:3] = 1  # c = 0.88
    assert label([0.0], _Fixed(g), range(25), eps=0.12).y == FEASIBLE
    g[:4] = 1  # c = 0.84
    assert label([0.0], _Fixed(g), range(25), eps=0.12).y == INFEASIBLE


def test_best_projection_from_largest_g():
    g = np.array([0.0, 3.0, 1.0])
    r = label([0.0], _Fixed(g), range(3), eps=0.0)
    assert np.allclose(r.best_projection, [1.0])


def test_node_limit_counts_as_failure():
    g = np.array([0.0, np.inf])
    r = label([0.0], _Fixed(g), range(2), eps=0.0)
    assert r.y == INFEASIBLE and r.c == 0.5


def test_eps_monotone():
    rng = np.random.default_rng(1)
    for _ in range(50):
        g = (rng.random(25) < 0.1).astype(float)
        ys = [label([0.0], _Fixed(g), range(25), e).y for e in (0.0, 0.04, 0.08, 0.12)]
        first = ys.index(FEASIBLE) if FEASIBLE in ys else 4
        assert all(y == FEASIBLE for y in ys[first:])


def test_eps_range():
    with pytest.raises(ValueError):
        label([0.0], _Fixed([0.0]), [0], eps=1.0)


def test_draw_scenarios():
    a = draw_scenarios(200, 25, 7)
    assert a.size == 25 and np.unique(a).size == 25
    assert np.array_equal(a, draw_scenarios(200, 25, 7))
    assert np.array_equal(draw_scenarios(5, 25, 1), np.arange(5))


def test_chance_labeler_determinism():
    h = HorizonConfig(2)
    x = build_x(AggregatorModelVars.uniform(2, 1, -1, 0.5, 1, 0, 1, -1), h)
    lab = ChanceLabeler(PolytopeDisaggregator(aggregator_polytope(x, h), 3), 2, 0.0)
    r1, r2 = lab([0.9, 0.9], 5), lab([0.9, 0.9], 5)
    assert r1.y == r2.y == INFEASIBLE and np.array_equal(r1.best_projection, r2.best_projection)
    assert lab([0.0, 0.0], 1).y == FEASIBLE
