"""Convex quadratic classifier ``d(p) = p'W2 p + w1'p + w0`` with ``W2 >= 0``.

Points with ``d(p) <= 0`` are classified feasible (label -1), so the feasible
region of a trained model is the ellipsoid ``{p : d(p) <= 0}``. Training
minimizes the mean hinge loss plus a ridge penalty by projected subgradient
steps on standardized inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.model_selection import train_test_split
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import jsonio
from .exceptions import DegenerateEllipsoid, DimensionMismatch, Diverged, SingleClassDataset
from .opt_core import project_psd

FEASIBLE, INFEASIBLE = -1, 1


@dataclass
class Ellipsoid:
    """Coefficients of ``d`` in original coordinates.

    ``standardization`` keeps the per-coordinate shift and scale the model was
    trained with (for audit only; ``d`` itself needs no preprocessing).
    """

    W2: np.ndarray
    w1: np.ndarray
    w0: float
    standardization: dict = field(default_factory=dict)

    def __post_init__(self):
        self.W2 = np.atleast_2d(np.asarray(self.W2, dtype=float))
        self.w1 = np.asarray(self.w1, dtype=float).ravel()
        self.w0 = float(self.w0)
        T = self.w1.size
        if self.W2.shape != (T, T):
            raise DimensionMismatch(f"W2 has shape {self.W2.shape}, w1 has length {T}")

    @property
    def dim(self) -> int:
        return self.w1.size

    def decision(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        P2 = np.atleast_2d(P)
        if P2.shape[1] != self.dim:
            raise DimensionMismatch(f"points have dimension {P2.shape[1]}, model {self.dim}")
        d = np.einsum("ni,ij,nj->n", P2, self.W2, P2) + P2 @ self.w1 + self.w0
        return d[0] if P.ndim == 1 else d

    def to_ball_form(self, floor: float = 0.0):
        """``(M, m, r)`` with ``{p : d(p) <= 0} = {p : ||M p + m|| <= r}``.

        Completing the square gives ``M = W2^(1/2)``, ``m = W2^(-1/2) w1 / 2``
        and ``r^2 = w1' W2^-1 w1 / 4 - w0``.
        """
        lam, V = np.linalg.eigh(0.5 * (self.W2 + self.W2.T))
        if lam[0] <= 0.0 or lam[0] < floor * (1.0 - 1e-9):
            raise DegenerateEllipsoid(f"smallest eigenvalue {lam[0]:.3g} is below the floor")
        M = (V * np.sqrt(lam)) @ V.T
        Mi = (V / np.sqrt(lam)) @ V.T
        m = 0.5 * Mi @ self.w1
        r2 = float(m @ m - self.w0)
        if not r2 > 0:
            raise DegenerateEllipsoid(f"squared radius {r2:.3g} is not positive")
        return M, m, np.sqrt(r2)

    def condition_number(self) -> float:
        lam = np.linalg.eigvalsh(0.5 * (self.W2 + self.W2.T))
        return float(lam[-1] / lam[0]) if lam[0] > 0 else float("inf")

    def to_json(self) -> dict:
        return {"W2": self.W2, "w1": self.w1, "w0": self.w0,
                "standardization": self.standardization}

    @classmethod
    def from_json(cls, obj) -> "Ellipsoid":
        return cls(obj["W2"], obj["w1"], obj["w0"], obj.get("standardization", {}))

    def save(self, path):
        jsonio.dump(self.to_json(), path)

    @classmethod
    def load(cls, path) -> "Ellipsoid":
        return cls.from_json(jsonio.load(path))


def classify(E: Ellipsoid, p):
    """``(label, margin)``; the boundary ``d = 0`` counts as feasible."""
    d = E.decision(p)
    return np.where(d <= 0.0, FEASIBLE, INFEASIBLE), d


@dataclass
class TrainReport:
    train_accuracy: float
    validation_accuracy: float
    objective_trace: list
    validation_trace: list
    cond_W2: float
    lam: float
    epochs: int
    best_epoch: int
    pd_floor: float
    initial_objective: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def destandardize(W, w, w0, shift, scale):
    """Map coefficients for ``z = (p - shift) / scale`` back to ``p``."""
    S = 1.0 / np.asarray(scale, dtype=float)
    mu = np.asarray(shift, dtype=float)
    W2 = W * S[:, None] * S[None, :]
    Sw = S * w
    w1 = Sw - 2.0 * W2 @ mu
    c = float(mu @ W2 @ mu - Sw @ mu + w0)
    return W2, w1, c


def _objective(W, w, w0, Z, y, lam):
    d = np.einsum("ni,ij,nj->n", Z, W, Z) + Z @ w + w0
    return float(np.mean(np.maximum(0.0, 1.0 - y * d)) + lam * (np.sum(W * W) + w @ w))


class QuadraticClassifier(ClassifierMixin, BaseEstimator):
    """Hinge-loss classifier with a PSD quadratic decision function.

    Labels are -1 (feasible, ``d <= 0``) and +1 (infeasible).

    Parameters
    ----------
    lam : ridge weight on ``||W2||_F^2 + ||w1||^2`` (standardized coordinates).
    epochs : passes over the training split.
    step0 : step size scale; every step of epoch ``k`` uses ``step0 / sqrt(k)``.
    batch_size : points per subgradient step (``None`` for full batch).
    validation_fraction : held-out share used for best-iterate selection.
    random_state : seed of the train/validation split.
    """

    def __init__(self, lam=1e-5, epochs=2000, step0=0.1, batch_size=32,
                 validation_fraction=0.2, random_state=0, pd_floor=1e-6):
        self.lam = lam
        self.batch_size = batch_size
        self.epochs = epochs
        self.step0 = step0
        self.validation_fraction = validation_fraction
        self.random_state = random_state
        self.pd_floor = pd_floor

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        y = y.astype(float)
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 (feasible) or +1 (infeasible)")
        if np.unique(y).size < 2:
            raise SingleClassDataset("training data contain a single class")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = X.shape[1]

        idx = np.arange(len(y))
        if self.validation_fraction and self.validation_fraction > 0:
            tr, va = train_test_split(idx, test_size=self.validation_fraction,
                                      random_state=self.random_state, stratify=y)
        else:
            tr, va = idx, idx[:0]
        self.train_indices_, self.validation_indices_ = tr, va
        shift = X[tr].mean(0)
        scale = X[tr].std(0)
        scale[scale == 0] = 1.0
        Z = (X - shift) / scale
        Zt, yt, Zv, yv = Z[tr], y[tr], Z[va], y[va]
        sel_Z, sel_y = (Zv, yv) if va.size else (Zt, yt)

        T = X.shape[1]
        W, w, w0 = np.eye(T), np.zeros(T), 0.0
        init_obj = _objective(W, w, w0, Zt, yt, self.lam)
        best = (np.inf, W, w, w0, 0)
        trace, vtrace = [], []
        rng = np.random.default_rng(self.random_state)
        n = len(yt)
        bs = n if not self.batch_size else min(int(self.batch_size), n)
        for k in range(1, self.epochs + 1):
            a = self.step0 / np.sqrt(k)
            perm = rng.permutation(n)
            for start in range(0, n, bs):
                B = perm[start:start + bs]
                Zb, yb = Zt[B], yt[B]
                d = np.einsum("ni,ij,nj->n", Zb, W, Zb) + Zb @ w + w0
                # hinge subgradient, taken as zero at the kink
                act = (1.0 - yb * d) > 0
                ya, Za = yb[act], Zb[act]
                m = len(B)
                gW = -(Za * ya[:, None]).T @ Za / m + 2.0 * self.lam * W
                gw = -(ya @ Za) / m + 2.0 * self.lam * w
                g0 = -ya.sum() / m
                W = project_psd(W - a * gW)
                w = w - a * gw
                w0 = w0 - a * g0
            obj = _objective(W, w, w0, Zt, yt, self.lam)
            vobj = _objective(W, w, w0, sel_Z, sel_y, self.lam)
            if not (np.isfinite(obj) and np.isfinite(vobj)):
                raise Diverged(f"objective became non-finite at epoch {k}")
            trace.append(obj)
            vtrace.append(vobj)
            if vobj < best[0]:
                best = (vobj, W.copy(), w.copy(), w0, k)
        _, W, w, w0, best_k = best
        W2, w1, c = destandardize(W, w, w0, shift, scale)
        W2 = 0.5 * (W2 + W2.T)
        floor = self.pd_floor * np.trace(W2) / T
        W2 = W2 + floor * np.eye(T)
        self.ellipsoid_ = Ellipsoid(W2, w1, c, {"shift": shift, "scale": scale, "pd_floor": floor})
        self.standardized_coef_ = (W, w, w0)

        pred = self.predict(X)
        self.report_ = TrainReport(
            train_accuracy=float(np.mean(pred[tr] == y[tr])),
            validation_accuracy=float(np.mean(pred[va] == y[va])) if va.size else float("nan"),
            objective_trace=trace, validation_trace=vtrace,
            cond_W2=self.ellipsoid_.condition_number(), lam=float(self.lam),
            epochs=int(self.epochs), best_epoch=int(best_k), pd_floor=float(floor),
            initial_objective=init_obj)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "ellipsoid_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return self.ellipsoid_.decision(X)

    def predict(self, X):
        return np.where(self.decision_function(X) <= 0.0, FEASIBLE, INFEASIBLE)


def train(points, labels, lam=1e-5, split_seed=0, **kwargs):
    """Fit a :class:`QuadraticClassifier` and return ``(Ellipsoid, TrainReport)``."""
    clf = QuadraticClassifier(lam=lam, random_state=split_seed, **kwargs).fit(points, labels)
    return clf.ellipsoid_, clf.report_
