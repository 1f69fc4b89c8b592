from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ..exceptions import MalformedProblem

SENSES = ("<=", "==", ">=")


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NODE_LIMIT = "NodeLimit"


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """Dense LP: minimize ``c @ v`` s.t. ``A v (senses) b`` and ``lo <= v <= hi``.

    Bounds default to ``[0, inf)``. Senses are ``"<="``, ``"=="`` or ``">="``;
    a single string applies to every row. ``A`` may be a scipy sparse matrix,
    which is kept in CSR form.
    """

    c: np.ndarray
    A: np.ndarray
    senses: tuple
    b: np.ndarray
    lo: np.ndarray = None
    hi: np.ndarray = None
    # derived data that depends only on (A, senses); shared by with_* copies
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        n = c.size
        if sparse.issparse(self.A):
            A = sparse.csr_matrix(self.A, dtype=float)
            a_finite = bool(np.all(np.isfinite(A.data)))
        else:
            A = np.asarray(self.A, dtype=float)
            if A.size == 0:
                A = A.reshape(0, n)
            a_finite = bool(np.all(np.isfinite(A)))
        if A.ndim != 2 or A.shape[1] != n:
            raise MalformedProblem(f"A has shape {A.shape}, expected (m, {n})")
        b = np.asarray(self.b, dtype=float).ravel()
        if b.size != A.shape[0]:
            raise MalformedProblem(f"{A.shape[0]} rows but rhs has length {b.size}")
        senses = self.senses
        if isinstance(senses, str):
            senses = (senses,) * A.shape[0]
        senses = tuple(senses)
        if len(senses) != A.shape[0]:
            raise MalformedProblem("one sense per row required")
        bad = [s for s in senses if s not in SENSES]
        if bad:
            raise MalformedProblem(f"unknown constraint sense {bad[0]!r}")
        lo = np.zeros(n) if self.lo is None else np.asarray(self.lo, dtype=float).ravel()
        hi = np.full(n, np.inf) if self.hi is None else np.asarray(self.hi, dtype=float).ravel()
        if lo.size != n or hi.size != n:
            raise MalformedProblem("bounds must have one entry per variable")
        if np.any(lo > hi) or np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise MalformedProblem("bounds must satisfy lo <= hi")
        if np.any(lo == np.inf) or np.any(hi == -np.inf):
            raise MalformedProblem("bounds must admit a finite value")
        if not (np.all(np.isfinite(c)) and a_finite and np.all(np.isfinite(b))):
            raise MalformedProblem("objective, matrix and rhs must be finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "senses", senses)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def is_sparse(self) -> bool:
        return sparse.issparse(self.A)

    def dense_A(self) -> np.ndarray:
        return self.A.toarray() if self.is_sparse else self.A

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b.size

    def with_bounds(self, lo, hi) -> "LinearProgram":
        return LinearProgram(self.c, self.A, self.senses, self.b, lo, hi, self.cache)

    def with_rhs(self, b) -> "LinearProgram":
        return LinearProgram(self.c, self.A, self.senses, b, self.lo, self.hi, self.cache)

    def residuals(self, v) -> np.ndarray:
        """Per-row violation (positive means violated) of the constraints at ``v``."""
        Av = np.asarray(self.A @ v).ravel()
        out = np.empty_like(self.b)
        for i, s in enumerate(self.senses):
            if s == "<=":
                out[i] = Av[i] - self.b[i]
            elif s == ">=":
                out[i] = self.b[i] - Av[i]
            else:
                out[i] = abs(Av[i] - self.b[i])
        return out

    def is_feasible(self, v, tol=None) -> bool:
        if tol is None:
            tol = feas_tol(self.b)
        v = np.asarray(v, dtype=float)
        if np.any(v < self.lo - tol) or np.any(v > self.hi + tol):
            return False
        return bool(np.all(self.residuals(v) <= tol))


@dataclass(frozen=True, eq=False)
class MilpProgram:
    base: LinearProgram
    binary_indices: tuple

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in set(self.binary_indices)))
        n = self.base.n_vars
        if any(i < 0 or i >= n for i in idx):
            raise MalformedProblem("binary index out of range")
        lo, hi = self.base.lo[list(idx)], self.base.hi[list(idx)]
        if np.any(lo < 0) or np.any(hi > 1):
            raise MalformedProblem("binary variables need bounds within [0, 1]")
        object.__setattr__(self, "binary_indices", idx)


@dataclass
class SolveResult:
    status: Status
    objective: float = float("nan")
    x: np.ndarray | None = None
    iterations: int = 0
    nodes: int = 0
    dual: np.ndarray | None = None
    dual_objective: float = float("nan")
    root_bound: float = float("nan")
    cutoff_reached: bool = False
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def feas_tol(b) -> float:
    b = np.asarray(b, dtype=float)
    return 1e-8 * (1.0 + (np.max(np.abs(b)) if b.size else 0.0))
