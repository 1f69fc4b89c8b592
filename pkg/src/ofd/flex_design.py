"""Maximum-volume market polytope inside a learned inner approximation.

The design variable is a shifted and scaled replica of a prototype,
``x = (x_bar - G z) / beta``, so ``vol P(x) = vol P(x_bar) / beta^T`` and the
volume is maximized by minimizing ``beta``. Containment ``P(x) ⊆ {E p <= d}``
holds iff some ``F >= 0`` has ``F G = E`` and ``F x_bar <= E z + beta d``.
Since ``F`` enters row by row, each row ``F_i`` may be replaced by the
minimizer of ``f . x_bar`` over ``{f >= 0 : f G = E_i}``; this splits the
problem into one small LP per row of ``E`` followed by a single LP in
``(z, beta)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import jsonio
from .exceptions import (DegenerateBeta, DimensionMismatch, EmptyPolytope, NoFeasiblePoints,
                         NonpositiveBeta, RowInfeasible)
from .market_model import HPolytope
from .opt_core import LinearProgram, Status, solve_lp

BETA_MIN = 1e-9


def compute_prototype(points, labels, G) -> np.ndarray:
    """Smallest ``x >= 0`` (in norm) with ``G p_n <= x`` for every feasible point.

    The constraints decouple by component, so the minimizer is the
    componentwise maximum of ``G p_n`` clamped at zero.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    labels = np.asarray(labels).ravel()
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if points.shape[1] != G.shape[1]:
        raise DimensionMismatch(f"points have dimension {points.shape[1]}, G has {G.shape[1]} columns")
    feas = points[labels == -1]
    if feas.shape[0] == 0:
        raise NoFeasiblePoints("dataset has no feasible point")
    return np.maximum((feas @ G.T).max(0), 0.0)


def volume_scale(v_prototype: float, beta: float, T: int) -> float:
    if not beta > 0:
        raise NonpositiveBeta(f"beta must be positive, got {beta}")
    return float(v_prototype) / float(beta) ** int(T)


@dataclass
class DesignResult:
    x_star: np.ndarray
    beta_star: float
    z_star: np.ndarray
    h: np.ndarray
    x_bar: np.ndarray
    dropped_rows: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"x_star": self.x_star, "beta": self.beta_star, "z": self.z_star, "h": self.h,
                "x_bar": self.x_bar, "dropped_rows": list(self.dropped_rows),
                "diagnostics": self.diagnostics}

    @classmethod
    def from_json(cls, obj) -> "DesignResult":
        return cls(np.asarray(obj["x_star"], float), float(obj["beta"]),
                   np.asarray(obj["z"], float), np.asarray(obj["h"], float),
                   np.asarray(obj["x_bar"], float), list(obj.get("dropped_rows", [])),
                   dict(obj.get("diagnostics", {})))

    def save(self, path):
        jsonio.dump(self.to_json(), path)

    @classmethod
    def load(cls, path) -> "DesignResult":
        return cls.from_json(jsonio.load(path))


def row_certificate(x_bar, G, e, backend="simplex"):
    """``min {f . x_bar : f G = e, f >= 0}``; ``None`` if ``e`` is outside the cone of rows of G."""
    G = np.asarray(G, dtype=float)
    lp = LinearProgram(x_bar, G.T, "==", e)
    res = solve_lp(lp, backend=backend)
    if res.status is Status.INFEASIBLE:
        return None, None
    if res.status is not Status.OPTIMAL:
        raise RuntimeError(f"row certificate LP ended with status {res.status.value}")
    return res.objective, res.x


def _redundant(E, d, i, backend) -> bool:
    """Is row ``i`` implied by the other rows of ``{E p <= d}``?"""
    n = E.shape[1]
    others = np.arange(E.shape[0]) != i
    A = np.vstack([E[others], E[i]])
    b = np.concatenate([d[others], [d[i] + 1.0]])
    res = solve_lp(LinearProgram(-E[i], A, "<=", b, np.full(n, -np.inf), np.full(n, np.inf)),
                   backend=backend)
    return res.optimal and -res.objective <= d[i] + 1e-9 * (1.0 + abs(d[i]))


def farkas_design(x_bar, G, P_D: HPolytope, backend: str = "simplex") -> DesignResult:
    """Minimize ``beta`` so that ``P((x_bar - G z) / beta) ⊆ P_D``.

    Stage 1 computes the per-row certificates ``h_i``; stage 2 solves
    ``min beta`` s.t. ``E z + beta d >= h``, ``beta >= 0``. Rows of ``E``
    outside the cone of rows of ``G`` are dropped only when they are
    redundant for ``P_D``.
    """
    x_bar = np.asarray(x_bar, dtype=float).ravel()
    G = np.atleast_2d(np.asarray(G, dtype=float))
    E, d = P_D.A, P_D.b
    T = G.shape[1]
    if x_bar.size != G.shape[0] or E.shape[1] != T:
        raise DimensionMismatch("x_bar, G and P_D have inconsistent sizes")
    if np.any(x_bar < 0):
        raise ValueError("x_bar must be componentwise nonnegative")
    if solve_lp(LinearProgram(np.zeros(T), G, "<=", x_bar, np.full(T, -np.inf),
                              np.full(T, np.inf)), backend=backend).status is Status.INFEASIBLE:
        raise EmptyPolytope("prototype polytope is empty")

    h = np.full(E.shape[0], np.nan)
    keep = np.ones(E.shape[0], dtype=bool)
    dropped = []
    for i in range(E.shape[0]):
        val, _ = row_certificate(x_bar, G, E[i], backend)
        if val is None:
            if _redundant(E, d, i, backend):
                keep[i] = False
                dropped.append(i)
                continue
            raise RowInfeasible(f"row {i} of P_D is not a nonnegative combination of rows of G")
        h[i] = val

    Ek, dk, hk = E[keep], d[keep], h[keep]
    # variables (z, beta): minimize beta s.t. -E z - beta d <= -h
    c = np.zeros(T + 1)
    c[-1] = 1.0
    A = -np.hstack([Ek, dk[:, None]])
    lo = np.concatenate([np.full(T, -np.inf), [0.0]])
    res = solve_lp(LinearProgram(c, A, "<=", -hk, lo, np.full(T + 1, np.inf)), backend=backend)
    if res.status is Status.INFEASIBLE:
        raise EmptyPolytope("no shifted and scaled prototype fits inside P_D")
    if res.status is Status.UNBOUNDED:
        raise RuntimeError("stage 2 LP is unbounded")
    z, beta = res.x[:T], float(res.x[-1])
    if beta < BETA_MIN:
        raise DegenerateBeta(f"optimal beta {beta:.3g} is below {BETA_MIN}")
    x_star = (x_bar - G @ z) / beta
    # no timings here: design artifacts must be reproducible bit for bit
    diag = {"rows": int(E.shape[0]), "stage1_lps": int(E.shape[0]), "backend": backend}
    return DesignResult(x_star, beta, z, h, x_bar, dropped, diag)


class FlexibilityDesigner(BaseEstimator):
    """Labeled schedules in, market polytope ``G p <= x_star`` out.

    ``fit`` trains the quadratic classifier, inner-approximates its ellipsoid
    by a polytope, computes the prototype and solves the containment LPs.
    ``predict`` returns -1 for points of ``P(x_star)`` and +1 otherwise.

    Parameters
    ----------
    horizon : HorizonConfig of the market model (defaults to hourly steps).
    lam, epochs, split_seed : classifier settings.
    delta : ball approximation accuracy.
    reduced : use the power-limits-only model ``[I; -I]``.
    prune_budget : LP redundancy tests per elimination round.
    backend : LP backend for the geometric steps.
    """

    def __init__(self, horizon=None, lam=1e-5, epochs=2000, split_seed=0, delta=0.1,
                 reduced=False, prune_budget=500, backend="highs"):
        self.horizon = horizon
        self.lam = lam
        self.epochs = epochs
        self.split_seed = split_seed
        self.delta = delta
        self.reduced = reduced
        self.prune_budget = prune_budget
        self.backend = backend

    def fit(self, X, y):
        from .classifier import QuadraticClassifier
        from .market_model import HorizonConfig, aggregator_polytope, build_G, build_reduced_G
        from .poly_geom import approximate_ellipsoid

        X, y = check_X_y(X, y, dtype=float)
        T = X.shape[1]
        h = self.horizon if self.horizon is not None else HorizonConfig(T)
        if h.T != T:
            raise DimensionMismatch(f"horizon has T={h.T}, data have {T} columns")
        self.n_features_in_ = T
        self.classifier_ = QuadraticClassifier(lam=self.lam, epochs=self.epochs,
                                               random_state=self.split_seed).fit(X, y)
        self.P_D_ = approximate_ellipsoid(self.classifier_.ellipsoid_, self.delta,
                                          prune_budget=self.prune_budget, backend=self.backend)
        G = build_reduced_G(h) if self.reduced else build_G(h)
        x_bar = compute_prototype(X, y, G)
        self.design_ = farkas_design(x_bar, G, self.P_D_, backend=self.backend)
        self.polytope_ = aggregator_polytope(self.design_.x_star, h, reduced=self.reduced)
        return self

    def predict(self, X):
        check_is_fitted(self, "polytope_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return np.where(self.polytope_.contains(X, tol=1e-9), -1, 1)
