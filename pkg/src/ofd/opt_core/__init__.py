"""LP, MILP and PSD-projection primitives used throughout the package.

``solve_lp``/``solve_milp`` dispatch to the in-house dense revised simplex and
branch and bound (``backend="simplex"`` / ``"bnb"``) or to HiGHS
(``backend="highs"``). The in-house solvers are the defaults.
"""
from __future__ import annotations

import numpy as np

from ..exceptions import MalformedProblem, NonFiniteEntries
from .bnb import TOL_MIP, solve_milp_bnb
from .highs import WarmHighs, solve_lp_highs, solve_milp_highs
from .problems import LinearProgram, MilpProgram, SolveResult, Status, feas_tol
from .rounding import fix_binaries, round_relaxation
from .simplex import WarmSimplex, solve_lp_simplex

__all__ = [
    "LinearProgram",
    "MilpProgram",
    "SolveResult",
    "Status",
    "feas_tol",
    "solve_lp",
    "solve_milp",
    "project_psd",
    "round_relaxation",
    "fix_binaries",
    "WarmSimplex",
    "WarmHighs",
]


def solve_lp(lp: LinearProgram, backend: str = "simplex") -> SolveResult:
    if backend == "simplex":
        return solve_lp_simplex(lp)
    if backend == "highs":
        return solve_lp_highs(lp)
    raise MalformedProblem(f"unknown LP backend {backend!r}")


def solve_milp(m: MilpProgram, node_limit: int = 50_000, cutoff: float | None = None,
               backend: str = "bnb", relaxation_first: bool = False,
               time_limit: float | None = None) -> SolveResult:
    """Solve a MILP with binary variables.

    With ``relaxation_first`` the LP relaxation is solved and rounded by
    :func:`round_relaxation`; if the rounded point attains the relaxation
    bound it is returned as a certified optimum and no tree search happens.
    ``time_limit`` only applies to the HiGHS backend and reports ``NodeLimit``.
    """
    if node_limit < 1:
        raise MalformedProblem("node_limit must be >= 1")
    if relaxation_first:
        lp_backend = "simplex" if backend == "bnb" else "highs"
        rel = solve_lp(m.base, backend=lp_backend)
        if rel.status is Status.INFEASIBLE:
            return SolveResult(Status.INFEASIBLE, iterations=rel.iterations)
        if rel.optimal:
            xr = round_relaxation(m, rel.x, tol=10 * feas_tol(m.base.b))
            if xr is not None:
                obj = float(m.base.c @ xr)
                if obj <= rel.objective + TOL_MIP * (1.0 + abs(rel.objective)):
                    return SolveResult(Status.OPTIMAL, objective=obj, x=xr, nodes=1,
                                       iterations=rel.iterations, root_bound=rel.objective,
                                       info={"rounded_relaxation": True})
    if backend == "bnb":
        return solve_milp_bnb(m, node_limit=node_limit, cutoff=cutoff)
    if backend == "bnb-highs":
        # in-house tree search with HiGHS node relaxations
        return solve_milp_bnb(m, node_limit=node_limit, cutoff=cutoff, lp_solver=solve_lp_highs)
    if backend == "highs":
        return solve_milp_highs(m, node_limit=node_limit, time_limit=time_limit)
    raise MalformedProblem(f"unknown MILP backend {backend!r}")


def project_psd(S) -> np.ndarray:
    """Nearest positive semidefinite matrix in Frobenius norm."""
    S = np.asarray(S, dtype=float)
    if not np.all(np.isfinite(S)):
        raise NonFiniteEntries("matrix contains NaN or inf")
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise MalformedProblem("square matrix required")
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    if w[0] >= 0.0:
        return S
    R = (V * np.maximum(w, 0.0)) @ V.T
    return 0.5 * (R + R.T)
