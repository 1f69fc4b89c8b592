"""Monte-Carlo volumes, bounding boxes and the convex-hull diagnostics M1/M2.

M1 is the share of infeasible dataset points lying in the convex hull of the
feasible ones. M2 is the share of points sampled from that hull which are
labeled infeasible. Both are near zero when the feasible set looks convex.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import EmptyPolytope, InvalidCount, SingleClassDataset, UnboundedPolytope
from .market_model import HPolytope
from .opt_core import LinearProgram, Status, solve_lp
from .poly_geom import SupportFunction


def bounding_box(P, backend: str = "simplex"):
    """Tightest axis-aligned box ``(lo, hi)`` around ``P`` from ``2T`` support LPs."""
    h = SupportFunction(P, backend)
    T = P.dim
    lo, hi = np.zeros(T), np.zeros(T)
    for t in range(T):
        e = np.zeros(T)
        e[t] = 1.0
        hi[t] = h(e)
        lo[t] = -h(-e)
    return lo, hi


@dataclass
class VolumeEstimate:
    estimate: float
    std_error: float
    hits: int
    samples: int
    box_volume: float
    seed: int

    def interval(self, k: float = 3.0):
        return self.estimate - k * self.std_error, self.estimate + k * self.std_error

    def to_json(self) -> dict:
        return dict(self.__dict__)


def mc_volume(P: HPolytope, samples: int = 10**6, seed: int = 0, box=None,
              chunk: int = 200_000, backend: str = "simplex") -> VolumeEstimate:
    """Hit-or-miss estimate of ``vol P`` from uniform samples of its bounding box.

    The standard error is the binomial one, ``V_box * sqrt(f (1 - f) / n)``.
    """
    if samples < 1:
        raise InvalidCount("samples must be >= 1")
    lo, hi = bounding_box(P, backend) if box is None else map(np.asarray, box)
    width = hi - lo
    vbox = float(np.prod(width))
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        X = lo + width * rng.random((n, P.dim))
        hits += int(np.count_nonzero(P.contains(X, tol=0.0)))
        done += n
    f = hits / samples
    return VolumeEstimate(vbox * f, vbox * np.sqrt(f * (1.0 - f) / samples), hits, samples,
                          vbox, int(seed))


def hull_membership(V, p, backend: str = "highs", tol: float = 1e-9) -> bool:
    """Is ``p`` a convex combination of the rows of ``V``?"""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    p = np.asarray(p, dtype=float)
    A = np.vstack([V.T, np.ones(V.shape[0])])
    b = np.concatenate([p, [1.0]])
    res = solve_lp(LinearProgram(np.zeros(V.shape[0]), A, "==", b), backend=backend)
    return res.status is Status.OPTIMAL


def _split(points, labels):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    labels = np.asarray(labels).ravel()
    feas, infeas = points[labels == -1], points[labels == 1]
    if feas.shape[0] == 0 or infeas.shape[0] == 0:
        raise SingleClassDataset("both feasible and infeasible points are required")
    return feas, infeas


def metric_M1(points, labels, backend: str = "highs") -> float:
    feas, infeas = _split(points, labels)
    inside = [hull_membership(feas, p, backend) for p in infeas]
    return float(np.mean(inside))


def _chord(V, x, u, backend):
    """Largest ``t`` with ``x + t u`` in ``conv(V)``."""
    n, T = V.shape
    # variables (lambda, t): sum lambda v_n - t u = x, sum lambda = 1
    A = np.zeros((T + 1, n + 1))
    A[:T, :n] = V.T
    A[:T, n] = -u
    A[T, :n] = 1.0
    c = np.zeros(n + 1)
    c[n] = -1.0
    res = solve_lp(LinearProgram(c, A, "==", np.concatenate([x, [1.0]])), backend=backend)
    if res.status is Status.UNBOUNDED:
        raise UnboundedPolytope("convex hull chord is unbounded")
    if res.status is not Status.OPTIMAL:
        raise EmptyPolytope("start point is outside the hull")
    return float(res.x[n])


def sample_hull(V, count: int, seed: int = 0, mode: str = "hit-and-run", burn_in=None,
                backend: str = "highs") -> np.ndarray:
    """Points from ``conv(V)``.

    ``hit-and-run`` (approximately uniform) starts at the centroid and takes
    ``burn_in`` steps (default ``5 T^2``) between returned points, with chord
    ends from LPs. ``dirichlet`` mixes all vertices with flat Dirichlet
    weights; it is cheap but not uniform over the hull.
    """
    if count < 1:
        raise InvalidCount("count must be >= 1")
    V = np.atleast_2d(np.asarray(V, dtype=float))
    n, T = V.shape
    rng = np.random.default_rng(seed)
    if mode == "dirichlet":
        return rng.dirichlet(np.ones(n), size=count) @ V
    if mode != "hit-and-run":
        raise ValueError(f"unknown sampling mode {mode!r}")
    steps = 5 * T * T if burn_in is None else int(burn_in)
    x = V.mean(0)
    out = np.empty((count, T))
    for k in range(count):
        for _ in range(max(steps, 1)):
            u = rng.normal(size=T)
            u /= np.linalg.norm(u)
            t_hi = _chord(V, x, u, backend)
            t_lo = -_chord(V, x, -u, backend)
            if t_hi - t_lo <= 1e-12:
                continue
            x = x + rng.uniform(t_lo, t_hi) * u
        out[k] = x
    return out


@dataclass
class M2Result:
    value: float
    points: np.ndarray
    labels: np.ndarray
    chance: np.ndarray
    mode: str


def metric_M2(points, labels, labeler, I: int = 100, seed: int = 0, mode: str = "hit-and-run",
              backend: str = "highs") -> M2Result:
    """Infeasible share among ``I`` points sampled from the hull of the feasible points.

    ``labeler(p, draw)`` returns a label result; ``draw`` seeds its scenario
    selection and is derived from ``seed``.
    """
    if I < 1:
        raise InvalidCount("I must be >= 1")
    feas, _ = _split(points, labels)
    if feas.shape[0] == 1:
        S = np.repeat(feas, I, axis=0)
    else:
        S = sample_hull(feas, I, seed, mode=mode, backend=backend)
    draws = np.random.SeedSequence(seed).generate_state(I)
    res = [labeler(p, int(dr)) for p, dr in zip(S, draws)]
    y = np.array([r.y for r in res])
    c = np.array([r.c for r in res])
    return M2Result(float(np.mean(y == 1)), S, y, c, mode)


def polygon_vertices(P: HPolytope) -> np.ndarray:
    """Counter-clockwise vertices of a bounded 2-D polytope."""
    from scipy.spatial import HalfspaceIntersection

    if P.dim != 2:
        raise ValueError("polygon_vertices needs a 2-D polytope")
    res = solve_lp(LinearProgram(np.r_[0.0, 0.0, -1.0],
                                 np.hstack([P.A, np.linalg.norm(P.A, axis=1)[:, None]]), "<=",
                                 P.b, np.r_[-np.inf, -np.inf, 0.0], np.r_[np.inf, np.inf, 1e6]),
                   backend="highs")
    if not res.optimal or res.x[2] <= 0:
        raise EmptyPolytope("polygon has empty interior")
    hs = HalfspaceIntersection(np.hstack([P.A, -P.b[:, None]]), res.x[:2])
    V = hs.intersections
    c = V.mean(0)
    order = np.argsort(np.arctan2(V[:, 1] - c[1], V[:, 0] - c[0]))
    return V[order]


def ellipse_boundary(E, n: int = 200) -> np.ndarray:
    """Points on the boundary of a 2-D ellipsoid ``{p : ||M p + m|| <= r}``."""
    M, m, r = E.to_ball_form()
    th = np.linspace(0.0, 2.0 * np.pi, n)
    Y = r * np.column_stack([np.cos(th), np.sin(th)])
    return np.linalg.solve(M, (Y - m).T).T


def write_polyline_csv(path, curves: dict):
    """One row per vertex: ``name,index,p1,p2``; polygons are closed."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "index", "p1", "p2"])
        for name, V in curves.items():
            V = np.asarray(V, dtype=float)
            if len(V) and not np.allclose(V[0], V[-1]):
                V = np.vstack([V, V[:1]])
            for i, (a, b) in enumerate(V):
                w.writerow([name, i, format(a, ".17g"), format(b, ".17g")])


def write_points_csv(path, points, labels):
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        T = np.asarray(points).shape[1]
        w.writerow([f"p{t + 1}" for t in range(T)] + ["y"])
        for p, y in zip(points, labels):
            w.writerow([format(v, ".17g") for v in p] + [int(y)])
