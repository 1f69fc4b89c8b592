"""Feasibility-preserving rounding of an LP-relaxation solution."""
from __future__ import annotations

import numpy as np

from .problems import LinearProgram, MilpProgram


def _columns(m: MilpProgram):
    lp = m.base
    if "binary_columns" not in lp.cache:
        cols = []
        if lp.is_sparse:
            C = lp.A.tocsc()
            for j in m.binary_indices:
                sl = slice(C.indptr[j], C.indptr[j + 1])
                cols.append((j, C.indices[sl].copy(), C.data[sl].copy()))
        else:
            for j in m.binary_indices:
                nz = np.flatnonzero(lp.A[:, j])
                cols.append((j, nz, lp.A[nz, j]))
        lp.cache["binary_columns"] = (m.binary_indices, cols)
    idx, cols = lp.cache["binary_columns"]
    if idx != m.binary_indices:
        raise ValueError("binary index set changed under a shared cache")
    return cols


def round_relaxation(m: MilpProgram, x, tol: float):
    """Move each binary of ``x`` to 0 or 1 while every row stays satisfied.

    Binaries are visited in index order; the nearer integer is tried first.
    Continuous variables are left untouched. Returns the rounded vector, or
    ``None`` if some binary admits no feasible value.
    """
    lp = m.base
    x = np.array(x, dtype=float)
    Ax = np.asarray(lp.A @ x).ravel()
    senses = np.array(lp.senses)
    is_le = senses == "<="
    is_ge = senses == ">="
    for j, nz, col in _columns(m):
        near = 1.0 if x[j] >= 0.5 else 0.0
        for v in (near, 1.0 - near):
            if v < lp.lo[j] or v > lp.hi[j]:
                continue
            new = Ax[nz] + col * (v - x[j])
            b = lp.b[nz]
            ok = np.where(is_le[nz], new <= b + tol,
                          np.where(is_ge[nz], new >= b - tol, np.abs(new - b) <= tol))
            if ok.all():
                Ax[nz] = new
                x[j] = v
                break
        else:
            return None
    return x


def fix_binaries(m: MilpProgram, x) -> LinearProgram:
    """The LP obtained by fixing every binary of ``m`` to the rounding of ``x``."""
    lp = m.base
    idx = list(m.binary_indices)
    v = np.round(np.clip(np.asarray(x, dtype=float)[idx], 0.0, 1.0))
    lo, hi = lp.lo.copy(), lp.hi.copy()
    lo[idx] = v
    hi[idx] = v
    return lp.with_bounds(lo, hi)
