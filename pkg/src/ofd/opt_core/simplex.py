"""Dense two-phase revised simplex.

Pricing is Dantzig's rule until the objective stalls for ``DEGENERACY_STREAK``
consecutive pivots, after which Bland's rule takes over until the objective
strictly improves again. The ratio test always breaks ties by the smallest
variable index, so runs are deterministic.
"""
from __future__ import annotations

import numpy as np

from ..exceptions import CycleLimit, MalformedProblem
from .problems import LinearProgram, SolveResult, Status, feas_tol

DEGENERACY_STREAK = 50
REFACTOR_EVERY = 64
TOL_OPT = 1e-9
TOL_PIVOT = 1e-9


class _StandardForm:
    """``min c x + const`` s.t. ``A x = b``, ``x >= 0``, ``b >= 0``.

    Original variables are recovered as ``v = shift + T @ x[:n_struct]``.
    """

    def __init__(self, lp: LinearProgram):
        n = lp.n_vars
        lo, hi = lp.lo, lp.hi
        cols = []          # (orig index, sign)
        shift = np.zeros(n)
        ub_rows = []       # (column, capacity)
        for j in range(n):
            if lo[j] == hi[j]:
                shift[j] = lo[j]
            elif np.isfinite(lo[j]):
                shift[j] = lo[j]
                cols.append((j, 1.0))
                if np.isfinite(hi[j]):
                    ub_rows.append((len(cols) - 1, hi[j] - lo[j]))
            elif np.isfinite(hi[j]):
                shift[j] = hi[j]
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        ns = len(cols)
        Tm = np.zeros((n, ns))
        for k, (j, s) in enumerate(cols):
            Tm[j, k] = s
        self.n_orig = n
        self.n_struct = ns
        self.shift = shift
        self.T = Tm

        m0 = lp.n_rows
        Ad = lp.dense_A()
        A0 = Ad @ Tm
        b0 = lp.b - Ad @ shift
        senses = list(lp.senses)
        mu = len(ub_rows)
        A_rows = np.zeros((m0 + mu, ns))
        A_rows[:m0] = A0
        b_rows = np.concatenate([b0, [cap for _, cap in ub_rows]])
        for r, (k, _) in enumerate(ub_rows):
            A_rows[m0 + r, k] = 1.0
        senses += ["<="] * mu
        m = m0 + mu

        n_slack = sum(1 for s in senses if s != "==")
        A = np.zeros((m, ns + n_slack))
        A[:, :ns] = A_rows
        slack_of_row = np.full(m, -1)
        k = ns
        for i, s in enumerate(senses):
            if s == "<=":
                A[i, k] = 1.0
                slack_of_row[i] = k
                k += 1
            elif s == ">=":
                A[i, k] = -1.0
                slack_of_row[i] = k
                k += 1
        flip = np.where(b_rows < 0, -1.0, 1.0)
        A *= flip[:, None]
        b = b_rows * flip

        self.A = A
        self.b = b
        self.m = m
        self.m_orig = m0
        self.flip = flip
        self.slack_of_row = slack_of_row
        self.c = np.zeros(A.shape[1])
        self.c[:ns] = Tm.T @ lp.c
        self.const = float(lp.c @ shift)

    def recover(self, x) -> np.ndarray:
        return self.shift + self.T @ x[: self.n_struct]


class _Simplex:
    def __init__(self, A, b, c, basis, max_iter):
        self.A = A
        self.b = b
        self.c = c
        self.basis = np.array(basis, dtype=int)
        self.AT = np.ascontiguousarray(A.T)  # row k is column k of A
        self.max_iter = max_iter
        self.iterations = 0
        self.refactor()

    def refactor(self):
        B = self.A[:, self.basis]
        self.Binv = np.linalg.inv(B)
        self.xB = self.Binv @ self.b
        self._since_refactor = 0

    def objective(self):
        return float(self.c[self.basis] @ self.xB)

    def run(self, allowed):
        """Pivot until optimal over the columns flagged in ``allowed``.

        Returns ``"optimal"`` or ``"unbounded"``.
        """
        streak = 0
        bland = False
        last_obj = self.objective()
        AT = self.AT
        eligible = allowed.copy()
        eligible[self.basis] = False
        while True:
            if self.iterations >= self.max_iter:
                raise CycleLimit(f"simplex exceeded {self.max_iter} iterations")
            y = self.c[self.basis] @ self.Binv
            d = self.c - y @ self.A
            mask = eligible & (d < -TOL_OPT)
            if not mask.any():
                return "optimal"
            if bland:
                q = int(np.argmax(mask))
            else:
                q = int(np.argmin(np.where(mask, d, np.inf)))
            u = self.Binv @ AT[q]
            pos = np.flatnonzero(u > TOL_PIVOT)
            if pos.size == 0:
                return "unbounded"
            ratios = np.maximum(self.xB[pos], 0.0) / u[pos]
            best = ratios.min()
            ties = pos[ratios <= best + 1e-12 * (1.0 + best)]
            r = ties[np.argmin(self.basis[ties])] if ties.size > 1 else ties[0]
            leaving = self.basis[r]
            self._pivot(r, q, u)
            eligible[q] = False
            eligible[leaving] = allowed[leaving]
            self.iterations += 1
            obj = self.objective()
            if obj < last_obj - 1e-12 * (1.0 + abs(last_obj)):
                streak = 0
                bland = False
            else:
                streak += 1
                if streak >= DEGENERACY_STREAK:
                    bland = True
            last_obj = obj

    def _pivot(self, r, q, u):
        theta = self.xB[r] / u[r]
        self.xB -= theta * u
        self.xB[r] = theta
        piv = self.Binv[r] / u[r]
        self.Binv -= u[:, None] * piv
        self.Binv[r] = piv
        self.basis[r] = q
        self._since_refactor += 1
        if self._since_refactor >= REFACTOR_EVERY:
            self.refactor()


def _phase_one(sf: _StandardForm, max_iter: int):
    """Find a feasible basis. Returns ``(rows kept, basis, iterations)`` or ``None``."""
    m, N = sf.A.shape
    # slack columns with +1 seed the basis, artificials elsewhere
    basis = []
    art_rows = []
    for i in range(m):
        k = sf.slack_of_row[i]
        if k >= 0 and sf.A[i, k] > 0:
            basis.append(k)
        else:
            basis.append(-1)
            art_rows.append(i)
    n_art = len(art_rows)
    if not n_art:
        return np.arange(m), np.array(basis, dtype=int), 0
    A1 = np.hstack([sf.A, np.zeros((m, n_art))])
    for a, i in enumerate(art_rows):
        A1[i, N + a] = 1.0
        basis[i] = N + a
    c1 = np.zeros(N + n_art)
    c1[N:] = 1.0
    sim = _Simplex(A1, sf.b, c1, basis, max_iter)
    sim.run(np.ones(N + n_art, dtype=bool))
    if sim.objective() > feas_tol(sf.b):
        return None
    # drive zero-level artificials out of the basis; drop rows that stay
    keep = np.ones(m, dtype=bool)
    for r in range(m):
        if sim.basis[r] < N:
            continue
        row = sim.Binv[r] @ sf.A
        row[sim.basis[sim.basis < N]] = 0.0
        cand = np.flatnonzero(np.abs(row) > 1e-9)
        if cand.size:
            q = cand[0]
            sim._pivot(r, q, sim.Binv @ A1[:, q])
        else:
            keep[r] = False
    return np.flatnonzero(keep), sim.basis[keep].copy(), sim.iterations


def _finish(lp, sf, sim2, rows) -> SolveResult:
    m, N = sf.A.shape
    sim2.refactor()
    x = np.zeros(N)
    x[sim2.basis] = np.maximum(sim2.xB, 0.0)
    v = sf.recover(x)
    y_rows = sim2.c[sim2.basis] @ sim2.Binv
    y = np.zeros(m)
    y[rows] = y_rows
    dual_obj = float(y @ sf.b) + float(lp.c @ sf.shift)
    # multipliers on the original rows, in the caller's sign convention
    dual = (y * sf.flip)[: sf.m_orig]
    return SolveResult(
        Status.OPTIMAL,
        objective=float(lp.c @ v),
        x=v,
        iterations=sim2.iterations,
        dual=dual,
        dual_objective=dual_obj,
        info={"reduced_costs_min": float(np.min(sim2.c - y_rows @ sim2.A)) if N else 0.0},
    )


def solve_lp_simplex(lp: LinearProgram, max_iter: int | None = None) -> SolveResult:
    sf = _StandardForm(lp)
    m, N = sf.A.shape
    if max_iter is None:
        max_iter = 50 * (m + N) + 1000

    if m == 0:
        # no rows: optimum sits at the bounds, unbounded if any free direction improves
        if np.any(sf.c < -TOL_OPT):
            return SolveResult(Status.UNBOUNDED)
        v = sf.recover(np.zeros(N))
        return SolveResult(Status.OPTIMAL, objective=float(lp.c @ v), x=v,
                           dual=np.zeros(lp.n_rows), dual_objective=sf.const)

    found = _phase_one(sf, max_iter)
    if found is None:
        return SolveResult(Status.INFEASIBLE)
    rows, basis, iters = found
    sim2 = _Simplex(sf.A[rows], sf.b[rows], sf.c, basis, max_iter)
    sim2.iterations = iters
    if sim2.run(np.ones(N, dtype=bool)) == "unbounded":
        return SolveResult(Status.UNBOUNDED, iterations=sim2.iterations)
    return _finish(lp, sf, sim2, rows)


class WarmSimplex:
    """Repeated LPs over one feasible region with changing objectives.

    Phase one runs once; each :meth:`minimize` call starts phase two from the
    previous optimal basis, which stays primal feasible when only the
    objective changes. Useful for support functions in many directions.
    """

    def __init__(self, lp: LinearProgram, max_iter: int | None = None):
        self.lp = lp
        self.sf = _StandardForm(lp)
        m, N = self.sf.A.shape
        self.max_iter = 50 * (m + N) + 1000 if max_iter is None else max_iter
        found = _phase_one(self.sf, self.max_iter) if m else (np.arange(0), np.arange(0), 0)
        self.feasible = found is not None
        if self.feasible:
            self.rows, self._basis, _ = found
            self._A = self.sf.A[self.rows]
            self._b = self.sf.b[self.rows]
            self._allowed = np.ones(self.sf.A.shape[1], dtype=bool)
        self._sim = None

    def minimize(self, c) -> SolveResult:
        c = np.asarray(c, dtype=float).ravel()
        if c.size != self.lp.n_vars:
            raise MalformedProblem(f"objective has length {c.size}, expected {self.lp.n_vars}")
        if not self.feasible:
            return SolveResult(Status.INFEASIBLE)
        sf = self.sf
        N = sf.A.shape[1]
        cs = np.zeros(N)
        cs[: sf.n_struct] = sf.T.T @ c
        if self._A.shape[0] == 0:
            if np.any(cs < -TOL_OPT):
                return SolveResult(Status.UNBOUNDED)
            v = sf.recover(np.zeros(N))
            return SolveResult(Status.OPTIMAL, objective=float(c @ v), x=v)
        if self._sim is None:
            self._sim = _Simplex(self._A, self._b, cs, self._basis, self.max_iter)
        sim = self._sim
        sim.c = cs
        sim.iterations = 0
        if sim.run(self._allowed) == "unbounded":
            # the basis is still primal feasible, keep it for the next call
            return SolveResult(Status.UNBOUNDED, iterations=sim.iterations)
        x = np.zeros(N)
        x[sim.basis] = np.maximum(sim.xB, 0.0)
        v = sf.recover(x)
        y_rows = cs[sim.basis] @ sim.Binv
        y = np.zeros(sf.m)
        y[self.rows] = y_rows
        return SolveResult(Status.OPTIMAL, objective=float(c @ v), x=v,
                           iterations=sim.iterations, dual=(y * sf.flip)[: sf.m_orig],
                           dual_objective=float(y @ sf.b) + float(c @ sf.shift))
