"""Roughly balanced labeled datasets of aggregate schedules.

A triplet starts from a uniform draw ``p1`` in a box ``H`` known to contain
every feasible schedule. When ``p1`` is infeasible, the projection found while
labeling it (``p2``) is usually feasible and near the boundary, and the point
``p3 = kappa p1 + (1 - kappa) p2`` is usually infeasible but close to the
boundary too. Convex combinations of feasible points are added afterwards so
the interior is represented.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import jsonio
from .disagg import FEASIBLE, INFEASIBLE
from .exceptions import BudgetExhausted, EmptyFleet, ParseError
from .market_model import HPolytope

ORIGINS = ("Uniform", "Projection", "Interpolated", "ConvexCombo")


@dataclass
class DataPoint:
    p: np.ndarray
    y: int
    c: float
    origin: str
    draw: int
    parents: list = field(default_factory=list)
    weights: list = field(default_factory=list)

    def to_json(self) -> dict:
        out = {"p": self.p, "y": int(self.y), "c": float(self.c), "origin": self.origin,
               "draw": int(self.draw)}
        if self.parents:
            out["parents"] = [int(i) for i in self.parents]
            out["weights"] = [float(w) for w in self.weights]
        return out

    @classmethod
    def from_json(cls, obj) -> "DataPoint":
        try:
            return cls(np.asarray(obj["p"], dtype=float), int(obj["y"]), float(obj["c"]),
                       str(obj["origin"]), int(obj.get("draw", 0)), list(obj.get("parents", [])),
                       list(obj.get("weights", [])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed dataset record: {exc}") from exc


@dataclass
class LabeledDataset:
    points: list
    eps: float
    seed: int
    kappa: float = 0.2
    n_labels: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    @property
    def T(self) -> int:
        return self.points[0].p.size if self.points else 0

    @property
    def X(self) -> np.ndarray:
        return np.array([pt.p for pt in self.points])

    @property
    def y(self) -> np.ndarray:
        return np.array([pt.y for pt in self.points], dtype=int)

    @property
    def c(self) -> np.ndarray:
        return np.array([pt.c for pt in self.points])

    def feasible_fraction(self) -> float:
        return float(np.mean(self.y == FEASIBLE)) if self.points else 0.0

    def relabel(self, eps: float) -> "LabeledDataset":
        """Same points and chance statistics, labels thresholded at another ``eps``.

        Valid because the statistic does not depend on ``eps`` once the
        scenario draw is fixed.
        """
        pts = [DataPoint(pt.p, FEASIBLE if pt.c >= 1.0 - eps - 1e-12 else INFEASIBLE, pt.c,
                         pt.origin, pt.draw, pt.parents, pt.weights) for pt in self.points]
        return LabeledDataset(pts, eps, self.seed, self.kappa, self.n_labels, dict(self.meta))

    def save(self, path):
        header = {"header": {"eps": self.eps, "seed": self.seed, "kappa": self.kappa,
                             "n_labels": self.n_labels, "meta": self.meta}}
        lines = [jsonio.dumps(header)] + [jsonio.dumps(pt.to_json()) for pt in self.points]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "LabeledDataset":
        path = Path(path)
        if not path.exists():
            raise ParseError(f"dataset file {path} does not exist")
        header = {"eps": 0.0, "seed": 0, "kappa": 0.2, "n_labels": 0, "meta": {}}
        points = []
        for ln, line in enumerate(path.read_text().splitlines(), 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{ln}: {exc}") from exc
            if "header" in obj:
                header.update(obj["header"])
            else:
                points.append(DataPoint.from_json(obj))
        return cls(points, float(header["eps"]), int(header["seed"]), float(header["kappa"]),
                   int(header["n_labels"]), dict(header["meta"]))


def estimate_H(disaggregator, scenarios=None) -> HPolytope:
    """Axis-aligned box holding every feasible schedule of every pool scenario.

    Per device and hour the LP-relaxation min and max of hourly power are
    taken over all scenarios, then summed over devices.
    """
    ks = range(disaggregator.n_scenarios) if scenarios is None else scenarios
    lo = hi = None
    for k in ks:
        l, u = disaggregator.hour_bounds(k)
        lo = l if lo is None else np.minimum(lo, l)
        hi = u if hi is None else np.maximum(hi, u)
    if lo is None or lo.shape[0] == 0:
        raise EmptyFleet("no devices or no scenarios to bound")
    return box_polytope(lo.sum(0), hi.sum(0))


def box_polytope(lo, hi) -> HPolytope:
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    T = lo.size
    I = np.eye(T)
    tags = [f"hi[{t}]" for t in range(T)] + [f"lo[{t}]" for t in range(T)]
    return HPolytope(np.vstack([I, -I]), np.concatenate([hi, -lo]), tags)


def box_bounds(H: HPolytope):
    T = H.dim
    return -H.b[T:], H.b[:T]


class _Counter:
    def __init__(self, budget):
        self.n = 0
        self.budget = budget

    def tick(self):
        self.n += 1
        if self.n > self.budget:
            raise BudgetExhausted(f"labeling budget of {self.budget} exhausted")


def _triplet(labeler, lo, hi, kappa, max_proj_iters, max_repeat, seed, budget):
    """Labeled points of one D1-D3 round, with parent references local to the round."""
    rng = np.random.default_rng(seed)
    counter = _Counter(budget)
    out = []

    def lab(p, origin, parents=(), weights=()):
        counter.tick()
        draw = int(rng.integers(2**63))
        r = labeler(p, draw)
        out.append(DataPoint(np.asarray(p, dtype=float), int(r.y), float(r.c), origin, draw,
                             list(parents), list(weights)))
        return r

    p1 = lo + (hi - lo) * rng.random(lo.size)
    r1 = lab(p1, "Uniform")
    if r1.y == FEASIBLE:
        return out, counter.n
    i1 = len(out) - 1
    # D2: project until a feasible point turns up
    cand = r1.best_projection
    i2 = None
    for _ in range(max_proj_iters):
        counter.tick()
        draw = int(rng.integers(2**63))
        r2 = labeler(cand, draw)
        if r2.y == FEASIBLE:
            out.append(DataPoint(np.asarray(cand, dtype=float), int(r2.y), float(r2.c),
                                 "Projection", draw))
            i2 = len(out) - 1
            break
        cand = r2.best_projection
    if i2 is None:
        return out, counter.n
    # D3: interpolate, moving the anchor while the interpolated point stays feasible
    anchor = i2
    for _ in range(max_repeat):
        p3 = kappa * out[i1].p + (1.0 - kappa) * out[anchor].p
        r3 = lab(p3, "Interpolated", (i1, anchor), (kappa, 1.0 - kappa))
        if r3.y != FEASIBLE:
            break
        anchor = len(out) - 1
    return out, counter.n


def _run_triplet(args):
    return _triplet(*args)


_WORKER_LABELER = None


def _init_worker(labeler):
    global _WORKER_LABELER
    _WORKER_LABELER = labeler


def _run_triplet_worker(args):
    return _triplet(_WORKER_LABELER, *args)


def generate(labeler, H: HPolytope, N_target: int, kappa: float = 0.2, seed: int = 0,
             feasible_share: float = 0.4, max_proj_iters: int = 5, max_repeat: int = 5,
             budget_factor: float = 40.0, workers: int = 1, batch: int = 16) -> LabeledDataset:
    """Dataset of at least ``N_target`` labeled points.

    ``labeler(p, draw)`` must return an object with fields ``y``, ``c`` and
    ``best_projection``. Rounds are seeded by index, so the result does not
    depend on ``workers``.
    """
    if not 0.0 < kappa < 1.0:
        raise ValueError("kappa must lie in (0, 1)")
    if N_target < 10:
        raise ValueError("N_target must be >= 10")
    lo, hi = box_bounds(H)
    budget = int(budget_factor * N_target)
    ss = np.random.SeedSequence(seed)
    points: list = []
    used = 0
    task = 0
    pool = None
    if workers > 1:
        pool = ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(labeler,))
    try:
        while len(points) < N_target:
            seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(batch)]
            args = [(lo, hi, kappa, max_proj_iters, max_repeat, s, budget) for s in seeds]
            if pool is None:
                results = [_triplet(labeler, *a) for a in args]
            else:
                results = list(pool.map(_run_triplet_worker, args))
            for pts, n in results:
                task += 1
                if len(points) >= N_target:
                    break
                used += n
                if used > budget:
                    raise BudgetExhausted(f"labeling budget of {budget} exhausted "
                                          f"with {len(points)} points")
                base = len(points)
                for pt in pts:
                    pt.parents = [base + i for i in pt.parents]
                    points.append(pt)
    finally:
        if pool is not None:
            pool.shutdown()

    # interior points from convex combinations of feasible ones
    rng = np.random.default_rng(ss.spawn(1)[0])
    while sum(pt.y == FEASIBLE for pt in points) < feasible_share * len(points):
        feas = [i for i, pt in enumerate(points) if pt.y == FEASIBLE]
        if not feas:
            break
        k = int(rng.integers(2, 5))
        parents = sorted(rng.choice(feas, size=min(k, len(feas)), replace=False).tolist())
        w = rng.dirichlet(np.ones(len(parents)))
        p = w @ np.array([points[i].p for i in parents])
        used += 1
        if used > budget:
            raise BudgetExhausted(f"labeling budget of {budget} exhausted with {len(points)} points")
        draw = int(rng.integers(2**63))
        r = labeler(p, draw)
        points.append(DataPoint(p, int(r.y), float(r.c), "ConvexCombo", draw, parents, w.tolist()))
    eps = float(getattr(labeler, "eps", 0.0))
    return LabeledDataset(points, eps, int(seed), float(kappa), used,
                          {"H_lo": lo.tolist(), "H_hi": hi.tolist(), "tasks": task})
