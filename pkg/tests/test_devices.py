import numpy as np
import pytest

from ofd.devices import (ETA_CHARGE, ETA_DISCHARGE, BatterySlice, DeviceKind, DeviceSpec,
                         EVSlice, PVSlice, Scenario, TCLSlice, device_constraints,
                         hourly_average, ingest_profiles, mean_scenario, sample_fleet,
                         sample_pool, sample_scenario, storage_soc, verify_schedule)
from ofd.exceptions import EmptyFleet, KindMismatch, LengthMismatch, ParseError
from ofd.market_model import HorizonConfig

H2 = HorizonConfig(2)
FLEET = sample_fleet({"PV": 2, "Battery": 2, "EV": 2, "TCL": 2}, 7)


def test_fleet_composition():
    kinds = [d.kind for d in FLEET]
    assert kinds.count(DeviceKind.EV) == 2 and kinds.count(DeviceKind.TCL) == 2
    for d in FLEET:
        assert d.p_cap > 0
        if d.kind is DeviceKind.EV:
            assert d.p_cap in (11.0, 16.5, 18.0, 19.2, 20.0, 21.1, 22.0)
            assert d.s_cap in (42.0, 60.0, 70.0, 75.0, 85.0, 90.0, 100.0)
        if d.kind is DeviceKind.TCL:
            assert 1.5 <= d.C <= 2.5 and 3 <= d.P <= 5 and 15 <= d.R <= 30 and 24 <= d.theta_s <= 26


def test_scenario_determinism():
    h = HorizonConfig(8)
    a, b = sample_scenario(FLEET, h, 11), sample_scenario(FLEET, h, 11)
    assert a.to_json() == b.to_json()
    assert Scenario.from_json(a.to_json()).to_json() == a.to_json()


def test_empty_fleet():
    with pytest.raises(EmptyFleet):
        sample_scenario([], H2, 0)
    with pytest.raises(EmptyFleet):
        mean_scenario([], H2)


def test_battery_s0_distribution():
    fleet = [DeviceSpec("Battery", 5.0, 10.0)]
    s0 = np.array([sample_scenario(fleet, H2, i).slices[0].s0 for i in range(10_000)])
    assert s0.min() >= 0 and s0.max() <= 10
    assert abs(s0.mean() - 5.0) <= 0.25


def test_ev_windows():
    h = HorizonConfig(12, start_hour=6.0)
    fleet = [DeviceSpec("EV", 11.0, 60.0)]
    for i in range(200):
        s = sample_scenario(fleet, h, i).slices[0]
        arr_h, dep_h = 6.0 + s.arrival / 4.0, 6.0 + s.departure / 4.0
        assert 9.0 <= arr_h <= 10.0 and 16.0 <= dep_h <= 17.0
        assert s.arrival < s.departure
        assert s.soc_arrival <= s.soc_required <= 60.0


def test_pv_bounds_example():
    blk = device_constraints(DeviceSpec("PV", 4.0), PVSlice(np.full(8, 0.5)), H2)
    assert np.allclose(blk.lo, -2.0) and np.allclose(blk.hi, 0.0)


def test_battery_soc_example():
    charge = np.array([4.0, 0, 0, 0, 0, 0, 0, 0])
    discharge = np.array([0, 4.0, 0, 0, 0, 0, 0, 0])
    s = storage_soc(1.0, charge, discharge)
    assert s[0] == pytest.approx(1.9) and s[1] == pytest.approx(0.8)
    # telescoping
    assert s[-1] - 1.0 == pytest.approx(0.25 * np.sum(ETA_CHARGE * charge - ETA_DISCHARGE * discharge))


def test_ev_availability_zeroes():
    h = HorizonConfig(20, start_hour=0.0)
    spec = DeviceSpec("EV", 11.0, 60.0)
    blk = device_constraints(spec, EVSlice(38, 65, 10.0, 20.0), h)
    nq = h.n_quarters
    for part in ("charge", "discharge"):
        idx = np.arange(nq)[blk.layout[part]]
        assert np.all(blk.hi[idx[:38]] == 0) and np.all(blk.hi[idx[65:]] == 0)
        assert np.all(blk.hi[idx[38:65]] > 0)


def test_kind_and_length_checks():
    with pytest.raises(KindMismatch):
        device_constraints(DeviceSpec("PV", 4.0), BatterySlice(1.0), H2)
    with pytest.raises(LengthMismatch):
        device_constraints(DeviceSpec("PV", 4.0), PVSlice(np.ones(3)), H2)


def test_hourly_average():
    assert np.allclose(hourly_average(np.arange(8.0)), [1.5, 5.5])


def test_verify_schedule_detects_violation():
    from ofd.devices import DeviceSchedule
    spec = DeviceSpec("PV", 4.0)
    sl = PVSlice(np.ones(8))
    assert verify_schedule(spec, sl, H2, DeviceSchedule(np.full(8, -4.0)))
    assert not verify_schedule(spec, sl, H2, DeviceSchedule(np.full(8, 0.5)))


def test_mean_scenario_is_feasible():
    h = HorizonConfig(4, start_hour=10.0)
    fleet = sample_fleet({"PV": 1, "Battery": 1, "EV": 1, "TCL": 1}, 3)
    sc = mean_scenario(fleet, h)
    assert isinstance(sc.slices[1], BatterySlice) and sc.slices[1].s0 == 0.5 * fleet[1].s_cap


def test_ingest_constant(tmp_path):
    nq = 8
    f = tmp_path / "irr.csv"
    f.write_text("tau,value\n" + "".join(f"{i},0.8\n" for i in range(15 * nq)))
    prof = ingest_profiles(f, nq)
    assert np.allclose(prof["value"], 0.8)


def test_ingest_sawtooth(tmp_path):
    nq = 4
    vals = np.tile(np.linspace(0, 1, 15), nq)
    f = tmp_path / "saw.csv"
    f.write_text("tau,value\n" + "".join(f"{i},{float(v)!r}\n" for i, v in enumerate(vals)))
    prof = ingest_profiles(f, nq)["value"]
    assert np.allclose(prof, vals.reshape(nq, 15).mean(1))
    assert np.all((prof >= 0) & (prof <= 1))


def test_ingest_errors(tmp_path):
    with pytest.raises(ParseError):
        ingest_profiles(tmp_path / "nope.csv", 4)
    f = tmp_path / "short.csv"
    f.write_text("tau,value\n0,1\n")
    with pytest.raises(LengthMismatch):
        ingest_profiles(f, 4)


def test_pool_seeds_distinct():
    pool = sample_pool(FLEET, H2, 5, 0)
    assert len({s.seed for s in pool}) == 5
