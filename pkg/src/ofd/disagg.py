"""Disaggregation of aggregate schedules and chance-constrained labeling.

``g(p; w)`` is the smallest l1 mismatch between ``p`` and any sum of device
schedules feasible under scenario ``w``. A schedule is labeled feasible
(``y = -1``) when the fraction of sampled scenarios with ``g = 0`` is at least
``1 - eps``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .devices import (DeviceSchedule, device_constraints, hourly_map, schedule_from_solution,
                      verify_schedule)
from .exceptions import DimensionMismatch, InfeasibleScenario
from .market_model import HorizonConfig, HPolytope
from .opt_core import (LinearProgram, MilpProgram, SolveResult, Status, feas_tol, fix_binaries,
                       WarmSimplex, round_relaxation, solve_lp, solve_milp)

FEASIBLE, INFEASIBLE = -1, 1


def g_tolerance(p) -> float:
    return 1e-6 * (1.0 + float(np.sum(np.abs(p))))


@dataclass
class DisaggResult:
    """Outcome of one disaggregation.

    ``proven`` means the zero/nonzero status of ``g_value`` is certain, either
    because the solve was optimal or because a lower bound already exceeds the
    tolerance. ``lower_bound`` is the best proven bound on the true mismatch.
    """

    g_value: float
    p_hat: np.ndarray
    device_schedules: list = field(default_factory=list)
    proven: bool = True
    lower_bound: float = 0.0


class _FleetProblem:
    """The disaggregation MILP of one scenario with the target ``p`` left open."""

    def __init__(self, fleet, scenario, h: HorizonConfig):
        T = h.T
        blocks = [device_constraints(spec, sl, h) for spec, sl in zip(fleet, scenario.slices)]
        n_dev = sum(b.n_vars for b in blocks)
        n = n_dev + 2 * T
        m_dev = sum(b.A.shape[0] for b in blocks)
        A = np.zeros((m_dev + T, n))
        b = np.zeros(m_dev + T)
        senses = []
        lo = np.zeros(n)
        hi = np.full(n, np.inf)
        binaries = []
        Hm = hourly_map(T)
        offsets = []
        r = c = 0
        for blk in blocks:
            k, mk = blk.n_vars, blk.A.shape[0]
            A[r:r + mk, c:c + k] = blk.A
            b[r:r + mk] = blk.b
            senses += blk.senses
            lo[c:c + k], hi[c:c + k] = blk.lo, blk.hi
            binaries += [c + j for j in blk.binaries]
            A[m_dev:, c:c + k] = Hm @ blk.load_map
            offsets.append(c)
            r += mk
            c += k
        A[m_dev:, n_dev:n_dev + T] = np.eye(T)
        A[m_dev:, n_dev + T:] = -np.eye(T)
        senses += ["=="] * T
        cost = np.zeros(n)
        cost[n_dev:] = 1.0
        self.fleet = fleet
        self.scenario = scenario
        self.h = h
        self.blocks = blocks
        self.offsets = offsets
        self.n_dev = n_dev
        self.m_dev = m_dev
        self.b, self.senses, self.lo, self.hi = b, senses, lo, hi
        self.cost = cost
        self.binaries = tuple(binaries)
        self.Hm = Hm

        # sparse storage keeps a pool of hundreds of scenario problems in memory
        self._lp = LinearProgram(cost, sparse.csr_matrix(A), senses, b, lo, hi)

    def milp(self, p) -> MilpProgram:
        b = self.b.copy()
        b[self.m_dev:] = p
        return MilpProgram(self._lp.with_rhs(b), self.binaries)

    def solve(self, p, backend="highs", node_limit=50_000, time_limit=None) -> DisaggResult:
        p = np.asarray(p, dtype=float)
        if p.size != self.h.T:
            raise DimensionMismatch(f"schedule has length {p.size}, horizon is {self.h.T}")
        tol = g_tolerance(p)
        m = self.milp(p)
        lp_backend = "highs" if backend == "highs" else "simplex"
        rel = solve_lp(m.base, backend=lp_backend)
        if rel.status is Status.INFEASIBLE:
            raise InfeasibleScenario("device constraints admit no schedule in this scenario")
        bound = max(rel.objective, 0.0)
        res = None
        if bound > tol:
            # nonzero mismatch is already certain; a feasible schedule from
            # the rounded binaries is good enough as a projection
            fixed = solve_lp(fix_binaries(m, rel.x), backend=lp_backend)
            if fixed.optimal:
                res = fixed
        else:
            xr = round_relaxation(m, rel.x, tol=10 * feas_tol(m.base.b))
            if xr is not None and float(m.base.c @ xr) <= tol:
                res = SolveResult(Status.OPTIMAL, objective=float(m.base.c @ xr), x=xr)
        if res is None:
            res = solve_milp(m, node_limit=node_limit, cutoff=tol, backend=backend,
                             time_limit=time_limit)
        if res.x is None:
            # node limit without incumbent: nothing proven
            return DisaggResult(np.inf, np.full(self.h.T, np.nan), [], proven=bound > tol,
                                lower_bound=bound)
        scheds = []
        p_hat = np.zeros(self.h.T)
        for spec, blk, off in zip(self.fleet, self.blocks, self.offsets):
            s = schedule_from_solution(spec, blk, res.x[off:off + blk.n_vars])
            scheds.append(s)
            p_hat += s.hourly
        g = float(np.sum(np.abs(p - p_hat)))
        proven = res.status is Status.OPTIMAL or g <= tol or bound > tol
        return DisaggResult(g, p_hat, scheds, proven=proven, lower_bound=bound)


def solve_disaggregation(p, scenario, fleet, h: HorizonConfig, backend="highs",
                         node_limit=50_000) -> DisaggResult:
    return _FleetProblem(fleet, scenario, h).solve(p, backend=backend, node_limit=node_limit)


def verify_disaggregation(res: DisaggResult, scenario, fleet, h, tol=1e-6) -> bool:
    """Independent re-check of every device schedule in ``res``."""
    return all(verify_schedule(spec, sl, h, s, tol)
               for spec, sl, s in zip(fleet, scenario.slices, res.device_schedules))


class FleetDisaggregator:
    """Disaggregation against a pool of scenarios, caching per-scenario MILPs and results."""

    def __init__(self, fleet, h: HorizonConfig, scenarios, backend="highs", node_limit=50_000,
                 time_limit=5.0, cache_size=200_000):
        self.time_limit = time_limit
        self.fleet = list(fleet)
        self.h = h
        self.scenarios = list(scenarios)
        self.backend = backend
        self.node_limit = node_limit
        self._problems = {}
        self._cache = {}
        self._cache_size = cache_size
        self.n_solves = 0

    @property
    def T(self) -> int:
        return self.h.T

    @property
    def n_scenarios(self) -> int:
        return len(self.scenarios)

    def problem(self, k) -> _FleetProblem:
        if k not in self._problems:
            self._problems[k] = _FleetProblem(self.fleet, self.scenarios[k], self.h)
        return self._problems[k]

    def disaggregate(self, p, k) -> DisaggResult:
        p = np.asarray(p, dtype=float)
        key = (p.tobytes(), k)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        res = self.problem(k).solve(p, backend=self.backend, node_limit=self.node_limit,
                                    time_limit=self.time_limit)
        self.n_solves += 1
        if len(self._cache) < self._cache_size:
            self._cache[key] = res
        return res

    def hour_bounds(self, k):
        """Per-device, per-hour (min, max) of hourly power under scenario ``k`` (LP relaxation)."""
        prob = self.problem(k)
        T = self.h.T
        lows = np.zeros((len(self.fleet), T))
        highs = np.zeros((len(self.fleet), T))
        for dev, blk in enumerate(prob.blocks):
            rows = prob.Hm @ blk.load_map
            solver = WarmSimplex(LinearProgram(np.zeros(blk.n_vars), blk.A, blk.senses, blk.b,
                                               blk.lo, blk.hi))
            if not solver.feasible:
                raise InfeasibleScenario(f"device {dev} infeasible in scenario {k}")
            for t in range(T):
                lows[dev, t] = solver.minimize(rows[t]).objective
                highs[dev, t] = -solver.minimize(-rows[t]).objective
        return lows, highs


class PolytopeDisaggregator:
    """Feasible set given directly as a polytope; ``g`` is the l1 distance to it.

    Every scenario index maps to the same set, which models deterministic
    externalities.
    """

    def __init__(self, P: HPolytope, n_scenarios: int = 1, backend="highs"):
        self.P = P
        self._n = n_scenarios
        self.backend = backend
        self.n_solves = 0
        self._cache = {}

    @property
    def T(self) -> int:
        return self.P.dim

    @property
    def n_scenarios(self) -> int:
        return self._n

    def disaggregate(self, p, k=0) -> DisaggResult:
        p = np.asarray(p, dtype=float)
        key = p.tobytes()
        if key in self._cache:
            return self._cache[key]
        T = self.T
        if p.size != T:
            raise DimensionMismatch(f"schedule has length {p.size}, polytope dimension {T}")
        # variables (q, e+, e-): A q <= b, q + e+ - e- = p
        A = np.zeros((self.P.n_rows + T, 3 * T))
        A[: self.P.n_rows, :T] = self.P.A
        A[self.P.n_rows:, :T] = np.eye(T)
        A[self.P.n_rows:, T:2 * T] = np.eye(T)
        A[self.P.n_rows:, 2 * T:] = -np.eye(T)
        b = np.concatenate([self.P.b, p])
        senses = ["<="] * self.P.n_rows + ["=="] * T
        c = np.concatenate([np.zeros(T), np.ones(2 * T)])
        lo = np.concatenate([np.full(T, -np.inf), np.zeros(2 * T)])
        res = solve_lp(LinearProgram(c, A, senses, b, lo), backend=self.backend)
        self.n_solves += 1
        if not res.optimal:
            raise InfeasibleScenario("feasible polytope is empty")
        q = res.x[:T]
        out = DisaggResult(float(np.sum(np.abs(p - q))), q, [DeviceSchedule(q)])
        self._cache[key] = out
        return out

    def hour_bounds(self, k=0):
        from .evaluation import bounding_box
        lo, hi = bounding_box(self.P, backend=self.backend)
        return lo[None, :], hi[None, :]


@dataclass
class LabelResult:
    y: int
    c: float
    best_projection: np.ndarray
    g_values: np.ndarray
    scenario_indices: np.ndarray


def draw_scenarios(n_pool: int, K: int, seed) -> np.ndarray:
    """``K`` distinct pool indices by a seeded shuffle (all of them if ``K >= n_pool``)."""
    perm = np.random.default_rng(seed).permutation(n_pool)
    return np.sort(perm[: min(K, n_pool)])


def chance_statistic(p, disaggregator, indices, g_tol=None) -> float:
    return label(p, disaggregator, indices, eps=0.0, g_tol=g_tol).c


def label(p, disaggregator, indices, eps: float, g_tol=None) -> LabelResult:
    """Label ``p`` against the scenarios ``indices`` of ``disaggregator``.

    Solves that hit the node limit without a zero-mismatch incumbent count as
    failures. The returned projection comes from the scenario with the largest
    mismatch ``g(p; w_k)``.
    """
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")
    p = np.asarray(p, dtype=float)
    tol = g_tolerance(p) if g_tol is None else g_tol
    indices = np.asarray(indices, dtype=int)
    if indices.size < 1:
        raise ValueError("at least one scenario is required")
    g = np.empty(indices.size)
    proj = np.zeros((indices.size, p.size))
    zero = np.zeros(indices.size, dtype=bool)
    for i, k in enumerate(indices):
        res = disaggregator.disaggregate(p, int(k))
        g[i] = res.g_value
        proj[i] = res.p_hat
        zero[i] = res.g_value <= tol
    c = float(np.mean(zero))
    y = FEASIBLE if c >= 1.0 - eps - 1e-12 else INFEASIBLE
    finite = np.where(np.isfinite(g), g, -np.inf)
    best = int(np.argmax(finite))
    best_proj = proj[best] if np.isfinite(g[best]) else p.copy()
    return LabelResult(y, c, best_proj, g, indices)


class ChanceLabeler:
    """Labels schedules against ``K`` scenarios drawn per call from a disaggregator's pool.

    ``draw`` seeds the scenario shuffle, so a stored ``(p, draw)`` pair can be
    re-labeled exactly.
    """

    def __init__(self, disaggregator, K: int, eps: float, g_tol=None):
        if K < 1:
            raise ValueError("K must be >= 1")
        self.disaggregator = disaggregator
        self.K = int(K)
        self.eps = float(eps)
        self.g_tol = g_tol

    @property
    def T(self) -> int:
        return self.disaggregator.T

    def indices(self, draw) -> np.ndarray:
        return draw_scenarios(self.disaggregator.n_scenarios, self.K, draw)

    def __call__(self, p, draw) -> LabelResult:
        return label(p, self.disaggregator, self.indices(draw), self.eps, self.g_tol)
