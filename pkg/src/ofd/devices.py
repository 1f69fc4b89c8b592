"""Device fleet models at 15-minute resolution and externality sampling.

Each device contributes a block of variables and constraints to the
disaggregation MILP. Loads are in kW, energies in kWh, and quarter-hour
indices ``tau`` count from the start of the market horizon.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import truncnorm

from .exceptions import EmptyFleet, InfeasibleScenario, KindMismatch, LengthMismatch, ParseError
from .market_model import HorizonConfig

EV_POWER_KW = (11.0, 16.5, 18.0, 19.2, 20.0, 21.1, 22.0)
EV_ENERGY_KWH = (42.0, 60.0, 70.0, 75.0, 85.0, 90.0, 100.0)
ETA_CHARGE = 0.9
ETA_DISCHARGE = 1.1
TCL_BAND = 0.5
EV_RESAMPLE_TRIES = 100


class DeviceKind(str, enum.Enum):
    PV = "PV"
    BATTERY = "Battery"
    EV = "EV"
    TCL = "TCL"


@dataclass(frozen=True)
class DeviceSpec:
    """Static device parameters. For TCLs ``p_cap`` is the on-state power."""

    kind: DeviceKind
    p_cap: float
    s_cap: float | None = None
    C: float | None = None
    P: float | None = None
    R: float | None = None
    theta_s: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", DeviceKind(self.kind))
        if not self.p_cap > 0:
            raise ValueError("p_cap must be positive")
        if self.kind in (DeviceKind.BATTERY, DeviceKind.EV) and not (self.s_cap and self.s_cap > 0):
            raise ValueError(f"{self.kind.value} needs a positive s_cap")
        if self.kind is DeviceKind.TCL and None in (self.C, self.P, self.R, self.theta_s):
            raise ValueError("TCL needs C, P, R and theta_s")

    def to_dict(self):
        d = {k: v for k, v in asdict(self).items() if v is not None}
        d["kind"] = self.kind.value
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class PVSlice:
    r: np.ndarray


@dataclass(frozen=True)
class BatterySlice:
    s0: float


@dataclass(frozen=True)
class EVSlice:
    arrival: int
    departure: int
    soc_arrival: float
    soc_required: float


@dataclass(frozen=True)
class TCLSlice:
    theta_a: np.ndarray
    theta0: float | None = None


_SLICE_OF = {DeviceKind.PV: PVSlice, DeviceKind.BATTERY: BatterySlice,
             DeviceKind.EV: EVSlice, DeviceKind.TCL: TCLSlice}


@dataclass(frozen=True)
class Scenario:
    """One joint realization of every device's externalities."""

    slices: tuple
    seed: int | None = None

    def to_json(self):
        out = []
        for s in self.slices:
            d = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in asdict(s).items()}
            d["type"] = type(s).__name__
            out.append(d)
        return {"seed": self.seed, "slices": out}

    @classmethod
    def from_json(cls, obj):
        types = {c.__name__: c for c in _SLICE_OF.values()}
        slices = []
        for d in obj["slices"]:
            d = dict(d)
            kind = types[d.pop("type")]
            for key in ("r", "theta_a"):
                if key in d:
                    d[key] = np.asarray(d[key], dtype=float)
            slices.append(kind(**d))
        return cls(tuple(slices), obj.get("seed"))


@dataclass
class DeviceBlock:
    """Variables and constraints of one device, ready to be stacked into a MILP.

    ``load_map`` maps the block's variables to quarter-hour loads ``l_tau``.
    """

    lo: np.ndarray
    hi: np.ndarray
    A: np.ndarray
    senses: list
    b: np.ndarray
    binaries: list
    load_map: np.ndarray
    layout: dict = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return self.lo.size


@dataclass
class DeviceSchedule:
    loads: np.ndarray
    binaries: np.ndarray | None = None
    charge: np.ndarray | None = None
    discharge: np.ndarray | None = None

    @property
    def hourly(self) -> np.ndarray:
        return hourly_average(self.loads)


def hourly_average(loads) -> np.ndarray:
    loads = np.asarray(loads, dtype=float)
    return loads.reshape(-1, 4).sum(axis=1) / 4.0


def hourly_map(T: int) -> np.ndarray:
    """``(T, 4T)`` matrix averaging quarter-hour loads into hourly power."""
    return np.kron(np.eye(T), np.full((1, 4), 0.25))


# --- base profiles -----------------------------------------------------------

def _clock(h: HorizonConfig) -> np.ndarray:
    return h.start_hour + (np.arange(h.n_quarters) + 0.5) / 4.0


def clear_sky_irradiance(h: HorizonConfig) -> np.ndarray:
    """Half-sine between 06:00 and 18:00 peaking at 1.0 at noon."""
    t = _clock(h) % 24.0
    return np.clip(np.sin(np.pi * (t - 6.0) / 12.0), 0.0, None)


def ambient_temperature(h: HorizonConfig) -> np.ndarray:
    """Daily cosine around 29 C peaking at 15:00."""
    t = _clock(h) % 24.0
    return 29.0 + 5.0 * np.cos(2.0 * np.pi * (t - 15.0) / 24.0)


def ingest_profiles(path, n_quarters: int, kind: str = "irradiance") -> dict:
    """Read a ``tau,<name>...`` CSV into 15-minute profiles.

    Files with ``15 * n_quarters`` rows are treated as 1-minute data and
    block-averaged. Values are clamped to the physical range of ``kind``.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2 or rows[0][0].strip() != "tau" or len(rows[0]) < 2:
        raise ParseError(f"{path}: expected a header row starting with 'tau'")
    names = [c.strip() for c in rows[0][1:]]
    try:
        data = np.array([[float(v) for v in r[1:]] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ParseError(f"{path}: non-numeric value ({exc})") from exc
    if data.ndim != 2 or data.shape[1] != len(names):
        raise ParseError(f"{path}: ragged rows")
    if data.shape[0] == 15 * n_quarters:
        data = data.reshape(n_quarters, 15, -1).mean(axis=1)
    elif data.shape[0] != n_quarters:
        raise LengthMismatch(f"{path}: {data.shape[0]} rows, expected {n_quarters} or {15 * n_quarters}")
    lo, hi = {"irradiance": (0.0, 1.0), "temperature": (-30.0, 55.0)}[kind]
    data = np.clip(data, lo, hi)
    return {name: data[:, j].copy() for j, name in enumerate(names)}


# --- fleets and scenarios ----------------------------------------------------

def sample_fleet(counts: dict, seed, pv_range=(2.0, 8.0), battery_power=(3.0, 7.0),
                 battery_energy=(7.0, 15.0), tcl_power=(2.0, 6.0)) -> list:
    """Draw device parameters; ``counts`` maps kind name to number of devices."""
    rng = np.random.default_rng(seed)
    fleet = []
    for kind in DeviceKind:
        for _ in range(int(counts.get(kind.value, 0))):
            if kind is DeviceKind.PV:
                fleet.append(DeviceSpec(kind, float(rng.uniform(*pv_range))))
            elif kind is DeviceKind.BATTERY:
                fleet.append(DeviceSpec(kind, float(rng.uniform(*battery_power)),
                                        float(rng.uniform(*battery_energy))))
            elif kind is DeviceKind.EV:
                fleet.append(DeviceSpec(kind, float(rng.choice(EV_POWER_KW)),
                                        float(rng.choice(EV_ENERGY_KWH))))
            else:
                fleet.append(DeviceSpec(kind, float(rng.uniform(*tcl_power)), C=float(rng.uniform(1.5, 2.5)),
                                        P=float(rng.uniform(3.0, 5.0)), R=float(rng.uniform(15.0, 30.0)),
                                        theta_s=float(rng.uniform(24.0, 26.0))))
    return fleet


def _truncnorm(rng, lo, hi, sd=0.5):
    mu = 0.5 * (lo + hi)
    return float(truncnorm.rvs((lo - mu) / sd, (hi - mu) / sd, loc=mu, scale=sd, random_state=rng))


def _ev_reachable(spec: DeviceSpec, s: EVSlice) -> bool:
    n = s.departure - s.arrival
    return s.soc_arrival + 0.25 * ETA_CHARGE * spec.p_cap * n >= s.soc_required


def _quarter_index(hour: float, h: HorizonConfig) -> int:
    return int(round(4.0 * (hour - h.start_hour)))


def sample_scenario(fleet, h: HorizonConfig, seed, profiles: dict | None = None,
                    arrival_window=(9.0, 10.0), departure_window=(16.0, 17.0)) -> Scenario:
    """Draw one externality scenario for every device in ``fleet``."""
    if not fleet:
        raise EmptyFleet("fleet is empty")
    profiles = profiles or {}
    rng = np.random.default_rng(seed)
    r_base = profiles.get("irradiance", clear_sky_irradiance(h))
    amb_base = profiles.get("temperature", ambient_temperature(h))
    nq = h.n_quarters
    slices = []
    for spec in fleet:
        if spec.kind is DeviceKind.PV:
            noise = np.clip(rng.normal(1.0, 0.05, nq), 0.9, 1.1)
            slices.append(PVSlice(np.clip(r_base * noise, 0.0, None)))
        elif spec.kind is DeviceKind.BATTERY:
            slices.append(BatterySlice(float(rng.uniform(0.0, spec.s_cap))))
        elif spec.kind is DeviceKind.EV:
            for _ in range(EV_RESAMPLE_TRIES):
                arr = _quarter_index(_truncnorm(rng, *arrival_window), h)
                dep = _quarter_index(_truncnorm(rng, *departure_window), h)
                soc_a = float(rng.uniform(0.1, 0.5) * spec.s_cap)
                soc_r = float(rng.uniform(soc_a, spec.s_cap))
                s = EVSlice(arr, dep, soc_a, soc_r)
                if arr < dep and _ev_reachable(spec, s):
                    break
            else:
                raise InfeasibleScenario("EV demand unreachable after resampling")
            slices.append(s)
        else:
            offset = rng.normal(0.0, 1.0)
            slices.append(TCLSlice(amb_base + offset + rng.normal(0.0, 0.3, nq)))
    return Scenario(tuple(slices), None if seed is None else int(seed))


def mean_scenario(fleet, h: HorizonConfig, profiles: dict | None = None,
                  arrival_window=(9.0, 10.0), departure_window=(16.0, 17.0)) -> Scenario:
    """Every externality replaced by its mean value."""
    if not fleet:
        raise EmptyFleet("fleet is empty")
    profiles = profiles or {}
    r_base = profiles.get("irradiance", clear_sky_irradiance(h))
    amb_base = profiles.get("temperature", ambient_temperature(h))
    slices = []
    for spec in fleet:
        if spec.kind is DeviceKind.PV:
            slices.append(PVSlice(np.array(r_base, dtype=float)))
        elif spec.kind is DeviceKind.BATTERY:
            slices.append(BatterySlice(0.5 * spec.s_cap))
        elif spec.kind is DeviceKind.EV:
            arr = _quarter_index(0.5 * sum(arrival_window), h)
            dep = _quarter_index(0.5 * sum(departure_window), h)
            soc_a = 0.3 * spec.s_cap
            soc_r = 0.5 * (soc_a + spec.s_cap)
            cap = soc_a + 0.25 * ETA_CHARGE * spec.p_cap * (dep - arr)
            slices.append(EVSlice(arr, dep, soc_a, min(soc_r, cap)))
        else:
            slices.append(TCLSlice(np.array(amb_base, dtype=float)))
    return Scenario(tuple(slices), None)


def sample_pool(fleet, h: HorizonConfig, size: int, seed, **kwargs) -> list:
    seeds = np.random.SeedSequence(seed).generate_state(size)
    return [sample_scenario(fleet, h, int(s), **kwargs) for s in seeds]


# --- constraint blocks -------------------------------------------------------

def _ev_window(sl: EVSlice, nq: int):
    """Available quarter-hours inside the horizon and the energy to add by its end."""
    start, stop = max(sl.arrival, 0), min(sl.departure, nq)
    total = sl.departure - sl.arrival
    inside = max(stop - start, 0)
    need = sl.soc_required - sl.soc_arrival
    if inside < total:
        need *= inside / total
    return start, stop, need


def device_constraints(spec: DeviceSpec, sl, h: HorizonConfig) -> DeviceBlock:
    if not isinstance(sl, _SLICE_OF[spec.kind]):
        raise KindMismatch(f"{type(sl).__name__} does not describe a {spec.kind.value}")
    nq = h.n_quarters
    if spec.kind is DeviceKind.PV:
        if np.asarray(sl.r).size != nq:
            raise LengthMismatch("irradiance profile length must be 4T")
        lo = -np.asarray(sl.r, dtype=float) * spec.p_cap
        return DeviceBlock(lo=lo, hi=np.zeros(nq), A=np.zeros((0, nq)), senses=[], b=np.zeros(0),
                           binaries=[], load_map=np.eye(nq), layout={"l": slice(0, nq)})
    if spec.kind in (DeviceKind.BATTERY, DeviceKind.EV):
        return _storage_block(spec, sl, nq)
    return _tcl_block(spec, sl, nq)


def _storage_block(spec, sl, nq):
    # variables: [l+ (nq), l- (nq), b (nq)]
    n = 3 * nq
    cp, cm, cb = slice(0, nq), slice(nq, 2 * nq), slice(2 * nq, 3 * nq)
    lo = np.zeros(n)
    hi = np.concatenate([np.full(nq, spec.p_cap), np.full(nq, spec.p_cap), np.ones(nq)])
    I = np.eye(nq)
    rows = [np.hstack([I, np.zeros((nq, nq)), -spec.p_cap * I]),
            np.hstack([np.zeros((nq, nq)), I, spec.p_cap * I])]
    senses = ["<="] * (2 * nq)
    rhs = [np.zeros(nq), np.full(nq, spec.p_cap)]
    cum = np.tril(np.ones((nq, nq))) * 0.25
    soc = np.hstack([ETA_CHARGE * cum, -ETA_DISCHARGE * cum, np.zeros((nq, nq))])
    if spec.kind is DeviceKind.BATTERY:
        s0 = sl.s0
        active = np.arange(nq)
        need = None
    else:
        s0 = sl.soc_arrival
        start, stop, need = _ev_window(sl, nq)
        off = np.r_[0:start, stop:nq].astype(int)
        for c in (cp, cm, cb):
            hi[np.arange(n)[c][off]] = 0.0
        active = np.arange(start, stop)
    rows += [soc[active], soc[active]]
    senses += ["<="] * active.size + [">="] * active.size
    rhs += [np.full(active.size, spec.s_cap - s0), np.full(active.size, -s0)]
    if need is not None and active.size:
        rows.append(soc[[active[-1]]])
        senses.append(">=")
        rhs.append(np.array([need]))
    load_map = np.hstack([I, -I, np.zeros((nq, nq))])
    return DeviceBlock(lo=lo, hi=hi, A=np.vstack(rows), senses=senses, b=np.concatenate(rhs),
                       binaries=list(range(2 * nq, 3 * nq)), load_map=load_map,
                       layout={"charge": cp, "discharge": cm, "b": cb, "s0": s0})


def _tcl_block(spec, sl, nq):
    theta_a = np.asarray(sl.theta_a, dtype=float)
    if theta_a.size != nq:
        raise LengthMismatch("ambient profile length must be 4T")
    theta0 = spec.theta_s if sl.theta0 is None else sl.theta0
    k = 1.0 / (4.0 * spec.C)
    # theta_{tau+1} = theta0 + k * sum_{j<=tau} (theta_a_j / R - P l_j)
    drift = theta0 + k * np.cumsum(theta_a / spec.R)
    cum = np.tril(np.ones((nq, nq))) * (k * spec.P)
    I = np.eye(nq)
    A = np.vstack([np.hstack([I, -spec.p_cap * I]),
                   np.hstack([cum, np.zeros((nq, nq))]),
                   np.hstack([cum, np.zeros((nq, nq))])])
    b = np.concatenate([np.zeros(nq), drift - (spec.theta_s - TCL_BAND), drift - (spec.theta_s + TCL_BAND)])
    senses = ["<="] * nq + ["<="] * nq + [">="] * nq
    lo = np.zeros(2 * nq)
    hi = np.concatenate([np.full(nq, spec.p_cap), np.ones(nq)])
    load_map = np.hstack([I, np.zeros((nq, nq))])
    return DeviceBlock(lo=lo, hi=hi, A=A, senses=senses, b=b, binaries=list(range(nq, 2 * nq)),
                       load_map=load_map, layout={"l": slice(0, nq), "b": slice(nq, 2 * nq)})


def schedule_from_solution(spec: DeviceSpec, block: DeviceBlock, v) -> DeviceSchedule:
    v = np.asarray(v, dtype=float)
    loads = block.load_map @ v
    if spec.kind in (DeviceKind.BATTERY, DeviceKind.EV):
        L = block.layout
        return DeviceSchedule(loads, np.round(v[L["b"]]), v[L["charge"]], v[L["discharge"]])
    if spec.kind is DeviceKind.TCL:
        return DeviceSchedule(loads, np.round(v[block.layout["b"]]))
    return DeviceSchedule(loads)


def storage_soc(s0, charge, discharge) -> np.ndarray:
    """SoC after each quarter-hour, by explicit recursion."""
    s = np.empty(len(charge))
    cur = s0
    for i, (lp, lm) in enumerate(zip(charge, discharge)):
        cur = cur + 0.25 * (ETA_CHARGE * lp - ETA_DISCHARGE * lm)
        s[i] = cur
    return s


def tcl_temperature(spec: DeviceSpec, sl: TCLSlice, loads) -> np.ndarray:
    """Indoor temperature after each quarter-hour, by explicit recursion."""
    theta = spec.theta_s if sl.theta0 is None else sl.theta0
    out = np.empty(len(loads))
    for i, (l, ta) in enumerate(zip(loads, sl.theta_a)):
        theta = theta - (spec.P * l - ta / spec.R) / (4.0 * spec.C)
        out[i] = theta
    return out


def verify_schedule(spec: DeviceSpec, sl, h: HorizonConfig, sched: DeviceSchedule, tol=1e-6) -> bool:
    """Check a schedule against the device physics, without the solver's rows."""
    l = np.asarray(sched.loads, dtype=float)
    nq = h.n_quarters
    if l.size != nq:
        return False
    if spec.kind is DeviceKind.PV:
        return bool(np.all(l <= tol) and np.all(l >= -np.asarray(sl.r) * spec.p_cap - tol))
    if spec.kind is DeviceKind.TCL:
        b = sched.binaries
        if b is None or np.any(l < -tol) or np.any(l > b * spec.p_cap + tol):
            return False
        th = tcl_temperature(spec, sl, l)
        return bool(np.all(np.abs(th - spec.theta_s) <= TCL_BAND + tol))
    lp, lm, b = sched.charge, sched.discharge, sched.binaries
    if lp is None or lm is None or b is None:
        return False
    if np.any(np.abs(l - (lp - lm)) > tol) or np.any(lp < -tol) or np.any(lm < -tol):
        return False
    if np.any(lp > b * spec.p_cap + tol) or np.any(lm > (1 - b) * spec.p_cap + tol):
        return False
    if spec.kind is DeviceKind.BATTERY:
        s = storage_soc(sl.s0, lp, lm)
        return bool(np.all(s >= -tol) and np.all(s <= spec.s_cap + tol))
    start, stop, need = _ev_window(sl, nq)
    outside = np.r_[0:start, stop:nq].astype(int)
    if np.any(np.abs(l[outside]) > tol):
        return False
    s = storage_soc(sl.soc_arrival, lp, lm)
    if np.any(s < -tol) or np.any(s > spec.s_cap + tol):
        return False
    if stop > start and s[stop - 1] - sl.soc_arrival < need - tol:
        return False
    return True
