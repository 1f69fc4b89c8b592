"""HiGHS backend: one-off solves through :mod:`scipy.optimize`, warm re-solves through highspy."""
from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .problems import LinearProgram, MilpProgram, SolveResult, Status


def _row_bounds(lp: LinearProgram):
    lb = np.full(lp.n_rows, -np.inf)
    ub = np.full(lp.n_rows, np.inf)
    for i, s in enumerate(lp.senses):
        if s != ">=":
            ub[i] = lp.b[i]
        if s != "<=":
            lb[i] = lp.b[i]
    return lb, ub


SPARSE_ABOVE = 4096


def _maybe_sparse(M):
    if sparse.issparse(M):
        return M.tocsr()
    return sparse.csr_matrix(M) if M.size > SPARSE_ABOVE else M


def _split(lp: LinearProgram):
    if "highs_split" not in lp.cache:
        s = np.array(lp.senses)
        ub_rows = (s == "<=") | (s == ">=")
        sign = np.where(s == ">=", -1.0, 1.0)
        eq = s == "=="
        signed = sparse.diags(sign) @ lp.A if lp.is_sparse else lp.A * sign[:, None]
        A_ub = _maybe_sparse(signed[ub_rows])
        A_eq = _maybe_sparse(lp.A[eq])
        lp.cache["highs_split"] = (A_ub, A_eq, sign, ub_rows, eq)
    A_ub, A_eq, sign, ub_rows, eq = lp.cache["highs_split"]
    return A_ub, (lp.b * sign)[ub_rows], A_eq, lp.b[eq], sign, ub_rows, eq


def _linprog(lp: LinearProgram, c):
    A_ub, b_ub, A_eq, b_eq, sign, ub_rows, eq = _split(lp)
    return linprog(
        c,
        A_ub=A_ub if b_ub.size else None,
        b_ub=b_ub if b_ub.size else None,
        A_eq=A_eq if b_eq.size else None,
        b_eq=b_eq if b_eq.size else None,
        bounds=np.column_stack([lp.lo, lp.hi]),
        method="highs",
    )


def solve_lp_highs(lp: LinearProgram) -> SolveResult:
    A_ub, b_ub, A_eq, b_eq, sign, ub_rows, eq = _split(lp)
    res = _linprog(lp, lp.c)
    if res.status == 2:
        # presolve may report "infeasible or unbounded"; settle it with a pure feasibility solve
        if np.any(lp.c) and _linprog(lp, np.zeros(lp.n_vars)).status == 0:
            return SolveResult(Status.UNBOUNDED, iterations=res.nit)
        return SolveResult(Status.INFEASIBLE, iterations=res.nit)
    if res.status == 3:
        return SolveResult(Status.UNBOUNDED, iterations=res.nit)
    if res.status != 0:
        raise RuntimeError(f"HiGHS LP failed: {res.message}")
    dual = np.zeros(lp.n_rows)
    if b_ub.size:
        dual[ub_rows] = res.ineqlin.marginals * sign[ub_rows]
    if b_eq.size:
        dual[eq] = res.eqlin.marginals
    dual_obj = float(dual @ lp.b)
    lo_m = getattr(res, "lower", None)
    up_m = getattr(res, "upper", None)
    if lo_m is not None:
        fin = np.isfinite(lp.lo)
        dual_obj += float(lo_m.marginals[fin] @ lp.lo[fin])
    if up_m is not None:
        fin = np.isfinite(lp.hi)
        dual_obj += float(up_m.marginals[fin] @ lp.hi[fin])
    return SolveResult(Status.OPTIMAL, objective=float(res.fun), x=np.asarray(res.x),
                       iterations=res.nit, dual=dual, dual_objective=dual_obj)


def solve_milp_highs(m: MilpProgram, node_limit: int = 50_000, time_limit=None,
                     sparse_rows: bool = True) -> SolveResult:
    lp = m.base
    integrality = np.zeros(lp.n_vars)
    integrality[list(m.binary_indices)] = 1
    lb, ub = _row_bounds(lp)
    if "highs_csr" not in lp.cache:
        lp.cache["highs_csr"] = sparse.csr_matrix(lp.A) if sparse_rows else lp.A
    A = lp.cache["highs_csr"]
    cons = [LinearConstraint(A, lb, ub)] if lp.n_rows else []
    options = {"node_limit": int(node_limit), "presolve": True}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    res = milp(lp.c, integrality=integrality, bounds=Bounds(lp.lo, lp.hi),
               constraints=cons, options=options)
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.status == 0:
        return SolveResult(Status.OPTIMAL, objective=float(res.fun), x=np.asarray(res.x),
                           nodes=nodes, root_bound=float(getattr(res, "mip_dual_bound", np.nan)))
    if res.status == 2:
        return SolveResult(Status.INFEASIBLE, nodes=nodes)
    if res.status == 3:
        return SolveResult(Status.UNBOUNDED, nodes=nodes)
    if res.status != 1:
        raise RuntimeError(f"HiGHS MILP failed: {res.message}")
    x = None if res.x is None else np.asarray(res.x)
    obj = float(res.fun) if x is not None else float("nan")
    return SolveResult(Status.NODE_LIMIT, objective=obj, x=x, nodes=nodes)


class WarmHighs:
    """Persistent HiGHS model for many LPs that differ only in costs or right-hand sides.

    HiGHS keeps its last basis between calls, so nearby problems re-solve in a
    few iterations. Mirrors :class:`WarmSimplex` for the ``"highs"`` backend.
    """

    def __init__(self, lp: LinearProgram):
        import highspy

        self._hs = highspy
        self.lp = lp
        self._lb, self._ub = _row_bounds(lp)
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        inf = highspy.kHighsInf
        model = highspy.HighsLp()
        model.num_col_, model.num_row_ = lp.n_vars, lp.n_rows
        model.col_cost_ = np.asarray(lp.c, dtype=float)
        model.col_lower_ = np.where(np.isfinite(lp.lo), lp.lo, -inf)
        model.col_upper_ = np.where(np.isfinite(lp.hi), lp.hi, inf)
        model.row_lower_ = np.where(np.isfinite(self._lb), self._lb, -inf)
        model.row_upper_ = np.where(np.isfinite(self._ub), self._ub, inf)
        A = sparse.csc_matrix(lp.A)
        model.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        model.a_matrix_.start_ = A.indptr
        model.a_matrix_.index_ = A.indices
        model.a_matrix_.value_ = A.data
        h.passModel(model)
        self._h = h
        self._cols = np.arange(lp.n_vars, dtype=np.int32)
        self._rows = np.arange(lp.n_rows, dtype=np.int32)

    def _status(self) -> Status:
        ms = self._h.getModelStatus()
        S = self._hs.HighsModelStatus
        if ms == S.kOptimal:
            return Status.OPTIMAL
        if ms == S.kInfeasible:
            return Status.INFEASIBLE
        if ms == S.kUnbounded:
            return Status.UNBOUNDED
        if ms == S.kUnboundedOrInfeasible:
            return Status.INFEASIBLE if not self._feasible() else Status.UNBOUNDED
        raise RuntimeError(f"HiGHS ended with model status {self._h.modelStatusToString(ms)}")

    def _feasible(self) -> bool:
        h = self._h
        cost = np.array(h.getLp().col_cost_)
        h.changeColsCost(self.lp.n_vars, self._cols, np.zeros(self.lp.n_vars))
        h.run()
        ok = h.getModelStatus() == self._hs.HighsModelStatus.kOptimal
        h.changeColsCost(self.lp.n_vars, self._cols, cost)
        return ok

    def solve(self, c=None, b=None, lo=None, hi=None) -> SolveResult:
        """Re-solve after replacing any of costs, right-hand sides and variable bounds."""
        h = self._h
        if lo is not None or hi is not None:
            inf = self._hs.kHighsInf
            lo = self.lp.lo if lo is None else np.asarray(lo, dtype=float)
            hi = self.lp.hi if hi is None else np.asarray(hi, dtype=float)
            h.changeColsBounds(self.lp.n_vars, self._cols, np.where(np.isfinite(lo), lo, -inf),
                               np.where(np.isfinite(hi), hi, inf))
        if c is not None:
            c = np.asarray(c, dtype=float).ravel()
            h.changeColsCost(self.lp.n_vars, self._cols, c)
        if b is not None:
            b = np.asarray(b, dtype=float).ravel()
            s = np.array(self.lp.senses)
            inf = self._hs.kHighsInf
            lb = np.where(s == "<=", -inf, b)
            ub = np.where(s == ">=", inf, b)
            h.changeRowsBounds(self.lp.n_rows, self._rows, lb, ub)
        h.run()
        if h.getModelStatus() == self._hs.HighsModelStatus.kUnknown:
            # a stale basis occasionally stalls HiGHS; retry from scratch
            h.clearSolver()
            h.run()
        st = self._status()
        if st is not Status.OPTIMAL:
            return SolveResult(st)
        sol = h.getSolution()
        info = h.getInfo()
        return SolveResult(Status.OPTIMAL, objective=float(info.objective_function_value),
                           x=np.array(sol.col_value), iterations=int(info.simplex_iteration_count))

    def minimize(self, c) -> SolveResult:
        return self.solve(c=c)
