"""Branch and bound over binary variables on top of the LP relaxation."""
from __future__ import annotations

import numpy as np

from .problems import MilpProgram, SolveResult, Status
from .simplex import solve_lp_simplex

INT_TOL = 1e-6
TOL_MIP = 1e-6
RESTART_EVERY = 1000


def solve_milp_bnb(m: MilpProgram, node_limit: int = 50_000, cutoff: float | None = None,
                   lp_solver=solve_lp_simplex) -> SolveResult:
    """Depth-first search branching on the most fractional binary.

    Every ``RESTART_EVERY`` nodes the open list is reordered so that the node
    with the best bound is explored next. If ``cutoff`` is given the search
    stops as soon as an incumbent with objective ``<= cutoff`` is found.
    """
    base = m.base
    bins = np.array(m.binary_indices, dtype=int)
    incumbent = None
    inc_obj = np.inf
    nodes = 0
    root_bound = np.nan
    relax_log = []
    # open nodes: (parent bound, lo, hi); the stack top is the last element
    stack = [(-np.inf, base.lo.copy(), base.hi.copy())]
    iterations = 0

    while stack:
        if nodes >= node_limit:
            return SolveResult(Status.NODE_LIMIT, objective=inc_obj if incumbent is not None else np.nan,
                               x=incumbent, nodes=nodes, iterations=iterations, root_bound=root_bound,
                               info={"relaxations": relax_log})
        if nodes and nodes % RESTART_EVERY == 0:
            stack.sort(key=lambda e: -e[0])
        bound, lo, hi = stack.pop()
        if bound >= inc_obj - TOL_MIP:
            continue
        nodes += 1
        rel = lp_solver(base.with_bounds(lo, hi))
        iterations += rel.iterations
        if nodes == 1:
            if rel.status is Status.UNBOUNDED:
                return SolveResult(Status.UNBOUNDED, nodes=nodes, iterations=iterations)
            root_bound = rel.objective if rel.optimal else np.inf
        if not rel.optimal:
            continue
        relax_log.append(rel.objective)
        if rel.objective >= inc_obj - TOL_MIP:
            continue
        xb = rel.x[bins]
        frac = np.abs(xb - np.round(xb))
        if bins.size == 0 or frac.max() <= INT_TOL:
            x = rel.x.copy()
            x[bins] = np.round(xb)
            incumbent, inc_obj = x, float(base.c @ x)
            if cutoff is not None and inc_obj <= cutoff:
                return SolveResult(Status.OPTIMAL, objective=inc_obj, x=incumbent, nodes=nodes,
                                   iterations=iterations, root_bound=root_bound, cutoff_reached=True,
                                   info={"relaxations": relax_log})
            continue
        # most fractional: distance to 0.5 smallest, ties to lowest index
        k = int(np.argmin(np.abs(xb - 0.5)))
        j = bins[k]
        near = 1.0 if xb[k] >= 0.5 else 0.0
        for val in (1.0 - near, near):  # pushed last is explored first
            clo, chi = lo.copy(), hi.copy()
            clo[j] = chi[j] = val
            stack.append((rel.objective, clo, chi))

    if incumbent is None:
        return SolveResult(Status.INFEASIBLE, nodes=nodes, iterations=iterations, root_bound=root_bound)
    return SolveResult(Status.OPTIMAL, objective=inc_obj, x=incumbent, nodes=nodes,
                       iterations=iterations, root_bound=root_bound, info={"relaxations": relax_log})
