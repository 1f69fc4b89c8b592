"""Polyhedral inner approximation of a Euclidean ball and projection to p-space.

The ball ``{y : ||y|| <= r}`` is replaced by a lifted polytope
``{y : E1 y + E2 q <= d for some q}`` built from a balanced binary tree of
planar rotations (a tower of variables). Each tree node bounds the norm of
its two children within a factor ``1 + delta2``; the root is capped so the
whole set sits inside the ball and contains the ball shrunk by ``1 + delta``.
Fourier-Motzkin elimination then removes the auxiliaries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import (DimensionMismatch, EmptyPolytope, InvalidDelta, RowExplosion,
                         UnboundedPolytope)
from .market_model import HPolytope
from .opt_core import LinearProgram, Status, WarmHighs, WarmSimplex, solve_lp

REDUNDANCY_TOL = 1e-9
CONTAINMENT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class LiftedPolytope:
    """``{v : E1 v + E2 q <= d for some q}``."""

    E1: np.ndarray
    E2: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        E1 = np.atleast_2d(np.asarray(self.E1, dtype=float))
        d = np.asarray(self.d, dtype=float).ravel()
        E2 = np.asarray(self.E2, dtype=float)
        if E2.size == 0:
            E2 = E2.reshape(E1.shape[0], 0)
        if E1.shape[0] != d.size or E2.shape[0] != d.size:
            raise DimensionMismatch("E1, E2 and d must have the same number of rows")
        object.__setattr__(self, "E1", E1)
        object.__setattr__(self, "E2", E2)
        object.__setattr__(self, "d", d)

    @property
    def dim(self) -> int:
        return self.E1.shape[1]

    @property
    def n_aux(self) -> int:
        return self.E2.shape[1]

    @property
    def n_rows(self) -> int:
        return self.d.size

    def lp(self, c_v=None) -> LinearProgram:
        """LP over ``(v, q)``, all variables free; objective on ``v`` only."""
        n = self.dim + self.n_aux
        c = np.zeros(n)
        if c_v is not None:
            c[: self.dim] = c_v
        return LinearProgram(c, np.hstack([self.E1, self.E2]), "<=", self.d,
                             np.full(n, -np.inf), np.full(n, np.inf))

    def contains(self, v, tol=1e-9, backend="highs") -> bool:
        """Membership by an LP feasibility test on the auxiliaries."""
        v = np.asarray(v, dtype=float)
        if v.size != self.dim:
            raise DimensionMismatch(f"point has size {v.size}, set dimension {self.dim}")
        rhs = self.d - self.E1 @ v + tol * (1.0 + np.abs(self.d))
        if self.n_aux == 0:
            return bool(np.all(rhs >= 0))
        lp = LinearProgram(np.zeros(self.n_aux), self.E2, "<=", rhs,
                           np.full(self.n_aux, -np.inf), np.full(self.n_aux, np.inf))
        return solve_lp(lp, backend=backend).status is Status.OPTIMAL


def node_accuracy(nu: int) -> float:
    """Norm overestimate of one planar node with ``nu`` rotations."""
    return 1.0 / math.cos(math.pi / 2 ** (nu + 1)) - 1.0


def tree_depth(T: int) -> int:
    return math.ceil(math.log2(T)) if T > 1 else 0


def rotations_needed(T: int, delta: float) -> int:
    """Smallest per-node rotation count meeting ``delta`` over the whole tree."""
    L = tree_depth(T)
    if L == 0:
        return 0
    nu = 1
    while (1.0 + node_accuracy(nu)) ** L > 1.0 + delta:
        nu += 1
    return nu


def ball_approximation(T: int, r: float, delta: float) -> LiftedPolytope:
    """Lifted polytope ``P`` over ``y`` in R^T with ``B(r / (1 + delta)) ⊆ P ⊆ B(r)``.

    Auxiliaries: one ``u_i >= |y_i|`` per coordinate, then ``nu`` fresh
    variables per internal tree node (the rotated second components). The
    rotated first components are linear in earlier variables and need no
    variable of their own.
    """
    if not 0.0 < delta < 1.0:
        raise InvalidDelta(f"delta must lie in (0, 1), got {delta}")
    if T < 1:
        raise DimensionMismatch("T must be >= 1")
    if not r > 0:
        raise ValueError("radius must be positive")
    if T == 1:
        return LiftedPolytope(np.array([[1.0], [-1.0]]), np.zeros((2, 0)), np.array([r, r]))

    nu = rotations_needed(T, delta)
    L = tree_depth(T)
    q = T + nu * (T - 1)
    n = T + q
    rows = []

    def var(k):
        e = np.zeros(n)
        e[k] = 1.0
        return e

    nodes = []
    for i in range(T):
        u = var(T + i)
        rows.append(var(i) - u)
        rows.append(-var(i) - u)
        nodes.append(u)
    nxt = 2 * T
    while len(nodes) > 1:
        level = []
        for a, b in zip(nodes[0::2], nodes[1::2]):
            xi, eta = a, b
            for j in range(1, nu + 1):
                th = math.pi / 2 ** (j + 1)
                c, s = math.cos(th), math.sin(th)
                e_new = var(nxt)
                nxt += 1
                rot = -s * xi + c * eta
                rows.append(rot - e_new)
                rows.append(-rot - e_new)
                xi, eta = c * xi + s * eta, e_new
            rows.append(eta - math.tan(math.pi / 2 ** (nu + 1)) * xi)
            level.append(xi)
        if len(nodes) % 2:
            level.append(nodes[-1])
        nodes = level
    assert nxt == n
    rows.append(nodes[0])
    A = np.array(rows)
    d = np.zeros(len(rows))
    d[-1] = r / (1.0 + node_accuracy(nu)) ** L
    return LiftedPolytope(A[:, :T], A[:, T:], d)


def map_to_p(P, M, m):
    """Substitute ``y = M p + m`` into a set over ``y``; works for lifted and plain polytopes."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    m = np.asarray(m, dtype=float).ravel()
    E1 = P.E1 if isinstance(P, LiftedPolytope) else P.A
    d = P.d if isinstance(P, LiftedPolytope) else P.b
    if M.shape != (E1.shape[1], E1.shape[1]) or m.size != E1.shape[1]:
        raise DimensionMismatch(f"map of shape {M.shape} for a {E1.shape[1]}-dimensional set")
    A, b = E1 @ M, d - E1 @ m
    if isinstance(P, LiftedPolytope):
        return LiftedPolytope(A, P.E2, b)
    return HPolytope(A, b, P.tags)


def _normalize(A, b):
    scale = np.max(np.abs(A), axis=1) if A.shape[1] else np.zeros(A.shape[0])
    zero = scale == 0
    scale[zero] = 1.0
    return A / scale[:, None], b / scale, zero


def _dedupe(A, b, hist):
    """Drop exact duplicates and rows dominated by a parallel row with smaller rhs."""
    if A.shape[0] == 0:
        return A, b, hist
    key = np.round(A, 12)
    _, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    order = np.lexsort((b, inv))
    first = np.ones(order.size, dtype=bool)
    first[1:] = inv[order[1:]] != inv[order[:-1]]
    keep = np.sort(order[first])
    return A[keep], b[keep], hist[keep]


def _lp_prune(A, b, hist, budget, backend):
    """Remove rows whose maximum over the remaining rows does not exceed their rhs."""
    if budget <= 0 or A.shape[0] <= 1:
        return A, b, hist, 0
    n = A.shape[1]
    keep = np.ones(A.shape[0], dtype=bool)
    used = 0
    free = np.full(n, -np.inf), np.full(n, np.inf)
    warm = WarmHighs(LinearProgram(np.zeros(n), A, "<=", b, *free)) if backend == "highs" else None
    for i in range(A.shape[0]):
        if used >= budget:
            break
        # relax row i by one unit so the LP stays bounded in its direction
        if warm is not None:
            rhs = np.where(keep, b, np.inf)
            rhs[i] = b[i] + 1.0
            res = warm.solve(c=-A[i], b=rhs)
        else:
            others = keep.copy()
            others[i] = False
            Ai = np.vstack([A[others], A[i]])
            bi = np.concatenate([b[others], [b[i] + 1.0]])
            res = solve_lp(LinearProgram(-A[i], Ai, "<=", bi, *free), backend=backend)
        used += 1
        if res.optimal and -res.objective <= b[i] + REDUNDANCY_TOL * (1.0 + abs(b[i])):
            keep[i] = False
    return A[keep], b[keep], hist[keep], used


def fourier_motzkin(L: LiftedPolytope, prune_budget: int = 500, row_cap: int = 1_000_000,
                    backend: str = "highs") -> HPolytope:
    """Project ``L`` onto its first block of variables.

    Auxiliaries are eliminated greedily by the smallest product of positive
    and negative occurrences. After each round rows are normalized, exact and
    parallel-dominated duplicates dropped, combinations with too long an
    ancestry discarded (Chernikov's rule), and up to ``prune_budget`` LP
    redundancy tests run on what remains. Every pruning step preserves the
    projected set exactly.
    """
    T, q = L.dim, L.n_aux
    A = np.hstack([L.E1, L.E2])
    b = L.d.copy()
    hist = np.eye(A.shape[0], dtype=bool)
    active = list(range(T, T + q))
    eliminated = 0
    lp_tests = 0
    while active:
        pos = A[:, active] > 0
        neg = A[:, active] < 0
        cost = pos.sum(0) * neg.sum(0)
        k = active.pop(int(np.argmin(cost)))
        col = A[:, k]
        P, N, Z = np.flatnonzero(col > 0), np.flatnonzero(col < 0), np.flatnonzero(col == 0)
        eliminated += 1
        if P.size and N.size:
            # multiply so the k-th coefficients cancel
            ap, an = col[P][:, None], -col[N][None, :]
            newA = (A[P][:, None, :] * an[..., None] + A[N][None, :, :] * ap[..., None])
            newA = newA.reshape(-1, A.shape[1])
            newb = (b[P][:, None] * an + b[N][None, :] * ap).ravel()
            newh = (hist[P][:, None, :] | hist[N][None, :, :]).reshape(-1, hist.shape[1])
            ok = newh.sum(1) <= eliminated + 1
            newA, newb, newh = newA[ok], newb[ok], newh[ok]
            newA[:, k] = 0.0
        else:
            newA = np.zeros((0, A.shape[1]))
            newb = np.zeros(0)
            newh = np.zeros((0, hist.shape[1]), dtype=bool)
        A = np.vstack([A[Z], newA])
        b = np.concatenate([b[Z], newb])
        hist = np.vstack([hist[Z], newh])
        if A.shape[0] > row_cap:
            raise RowExplosion(f"{A.shape[0]} rows after eliminating {eliminated} variables")
        A, b, zero = _normalize(A, b)
        if np.any(zero & (b < -REDUNDANCY_TOL)):
            raise EmptyPolytope("projection is empty")
        A, b, hist = A[~zero], b[~zero], hist[~zero]
        A, b, hist = _dedupe(A, b, hist)
        A, b, hist, used = _lp_prune(A[:, :T + q], b, hist, prune_budget, backend)
        lp_tests += used
    return HPolytope(A[:, :T], b)


def _as_lp(P, c):
    if isinstance(P, LiftedPolytope):
        return P.lp(c)
    n = P.dim
    return LinearProgram(c, P.A, "<=", P.b, np.full(n, -np.inf), np.full(n, np.inf))


class SupportFunction:
    """``h(u) = max u.v`` over an H- or lifted polytope, warm-started across directions.

    ``backend`` picks the in-house simplex or a persistent HiGHS model.
    """

    def __init__(self, P, backend: str = "simplex"):
        self.P = P
        self.dim = P.dim
        lp = _as_lp(P, np.zeros(P.dim))
        if backend == "highs":
            self._solver = WarmHighs(lp)
            if self._solver.solve().status is Status.INFEASIBLE:
                raise EmptyPolytope("polytope is empty")
        elif backend == "simplex":
            self._solver = WarmSimplex(lp)
            if not self._solver.feasible:
                raise EmptyPolytope("polytope is empty")
        else:
            raise ValueError(f"unknown backend {backend!r}")

    def __call__(self, u) -> float:
        return self.argmax(u)[0]

    def argmax(self, u):
        u = np.asarray(u, dtype=float).ravel()
        if u.size != self.dim:
            raise DimensionMismatch(f"direction has size {u.size}, polytope dimension {self.dim}")
        c = np.zeros(self._solver.lp.n_vars)
        c[: self.dim] = -u
        res = self._solver.minimize(c)
        if res.status is Status.INFEASIBLE:
            raise EmptyPolytope("polytope is empty")
        if res.status is Status.UNBOUNDED:
            raise UnboundedPolytope("polytope is unbounded in the requested direction")
        return -res.objective, res.x[: self.dim]


def support(P, u, backend: str = "simplex") -> float:
    """Maximum of ``u . v`` over ``P``."""
    u = np.asarray(u, dtype=float).ravel()
    if u.size != P.dim:
        raise DimensionMismatch(f"direction has size {u.size}, polytope dimension {P.dim}")
    base = _as_lp(P, np.zeros(P.dim))
    c = np.zeros(base.n_vars)
    c[: P.dim] = -u
    res = solve_lp(LinearProgram(c, base.A, base.senses, base.b, base.lo, base.hi), backend=backend)
    if res.status is Status.INFEASIBLE:
        raise EmptyPolytope("polytope is empty")
    if res.status is Status.UNBOUNDED:
        raise UnboundedPolytope("polytope is unbounded in the requested direction")
    return -res.objective


def certify_containment(inner, outer: HPolytope, tol: float = CONTAINMENT_TOL):
    """Check ``inner ⊆ outer`` row by row.

    Returns ``(contained, worst_slack)`` where the slack of row ``i`` is
    ``b_i - max_{inner} a_i . v``; containment holds iff every slack is at
    least ``-tol``.
    """
    h = SupportFunction(inner)
    slack = np.array([outer.b[i] - h(outer.A[i]) for i in range(outer.n_rows)])
    worst = float(slack.min()) if slack.size else float("inf")
    return worst >= -tol, worst


_UNIT_CACHE: dict = {}


def unit_ball_polytope(T: int, delta: float, prune_budget: int = 500,
                       backend: str = "highs") -> HPolytope:
    """Projected ball approximation of radius 1, cached per ``(T, delta)``."""
    key = (int(T), float(delta), int(prune_budget))
    if key not in _UNIT_CACHE:
        _UNIT_CACHE[key] = fourier_motzkin(ball_approximation(T, 1.0, delta), prune_budget,
                                           backend=backend)
    return _UNIT_CACHE[key]


def approximate_ellipsoid(E, delta: float, prune_budget: int = 500,
                          backend: str = "highs") -> HPolytope:
    """Polytope ``P_D`` inside the ellipsoid ``E``, containing ``E`` shrunk by ``1 + delta``.

    The auxiliaries are eliminated in ``y``-space, where the lifted set does
    not depend on the ellipsoid, and the result is mapped to ``p`` through
    ``y = M p + m``. Since the map is a bijection, this equals eliminating
    after the substitution.
    """
    M, m, r = E.to_ball_form()
    U = unit_ball_polytope(E.dim, delta, prune_budget, backend)
    return map_to_p(HPolytope(U.A, r * U.b), M, m)
