"""The aggregator bidding model ``G p <= x`` accepted by the market operator.

Rows of ``G`` come in six blocks, in this order::

    +I      p_t               <= p_max_t
    -I     -p_t               <= -p_min_t
    +dL     dt * sum_{k<=t} p_k <= s0 - s_min_t
    -dL    -dt * sum_{k<=t} p_k <= s_max_t - s0
    +K      p_{t+1} - p_t     <= ramp_up_t
    -K      p_t - p_{t+1}     <= -ramp_dn_t

The state of charge evolves as ``s_t = s_{t-1} - dt * p_t``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jsonio
from .exceptions import DimensionMismatch


@dataclass(frozen=True)
class HorizonConfig:
    T: int
    delta_hours: float = 1.0
    start_hour: float = 9.0

    def __post_init__(self):
        if int(self.T) < 1:
            raise ValueError("T must be >= 1")
        if not self.delta_hours > 0:
            raise ValueError("delta_hours must be positive")
        object.__setattr__(self, "T", int(self.T))

    @property
    def n_quarters(self) -> int:
        return 4 * self.T


@dataclass(frozen=True)
class AggregatorModelVars:
    p_max: np.ndarray
    p_min: np.ndarray
    s0: float
    s_max: np.ndarray
    s_min: np.ndarray
    ramp_up: np.ndarray
    ramp_dn: np.ndarray

    def __post_init__(self):
        for name in ("p_max", "p_min", "s_max", "s_min", "ramp_up", "ramp_dn"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if np.any(self.p_min > self.p_max) or np.any(self.s_min > self.s_max) \
                or np.any(self.ramp_dn > self.ramp_up):
            raise ValueError("lower limits must not exceed upper limits")

    @classmethod
    def uniform(cls, T, p_max, p_min, s0, s_max, s_min, ramp_up, ramp_dn):
        """Time-invariant limits broadcast over ``T`` periods."""
        return cls(np.full(T, p_max, float), np.full(T, p_min, float), float(s0),
                   np.full(T, s_max, float), np.full(T, s_min, float),
                   np.full(max(T - 1, 0), ramp_up, float), np.full(max(T - 1, 0), ramp_dn, float))

    def to_dict(self):
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}


@dataclass(frozen=True, eq=False)
class HPolytope:
    """``{p : A p <= b}`` with one provenance tag per row."""

    A: np.ndarray
    b: np.ndarray
    tags: tuple = field(default=())

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).ravel()
        if A.shape[0] != b.size:
            raise DimensionMismatch(f"{A.shape[0]} rows but {b.size} rhs entries")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("polytope entries must be finite")
        tags = tuple(self.tags) if self.tags else tuple(f"r{i}" for i in range(b.size))
        if len(tags) != b.size:
            raise DimensionMismatch("one tag per row required")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "tags", tags)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def n_rows(self) -> int:
        return self.b.size

    def contains(self, P, tol=0.0):
        """Vectorized membership; ``P`` is one point or an ``(n, dim)`` array."""
        P = np.asarray(P, dtype=float)
        single = P.ndim == 1
        P2 = np.atleast_2d(P)
        if P2.shape[1] != self.dim:
            raise DimensionMismatch(f"points have dimension {P2.shape[1]}, polytope {self.dim}")
        inside = np.all(P2 @ self.A.T <= self.b + tol, axis=1)
        return bool(inside[0]) if single else inside

    def to_json(self) -> dict:
        return {"dim": self.dim, "A": self.A, "b": self.b, "tags": list(self.tags)}

    @classmethod
    def from_json(cls, obj) -> "HPolytope":
        A = np.asarray(obj["A"], dtype=float)
        if A.size == 0:
            A = A.reshape(0, int(obj.get("dim", 0)))
        return cls(A, obj["b"], tuple(obj.get("tags", ())))

    def save(self, path):
        jsonio.dump(self.to_json(), path)

    @classmethod
    def load(cls, path) -> "HPolytope":
        return cls.from_json(jsonio.load(path))


def _K(T):
    K = np.zeros((max(T - 1, 0), T))
    for t in range(T - 1):
        K[t, t] = -1.0
        K[t, t + 1] = 1.0
    return K


def build_G(h: HorizonConfig) -> np.ndarray:
    T = h.T
    I = np.eye(T)
    dL = h.delta_hours * np.tril(np.ones((T, T)))
    K = _K(T)
    return np.vstack([I, -I, dL, -dL, K, -K])


def build_reduced_G(h: HorizonConfig) -> np.ndarray:
    I = np.eye(h.T)
    return np.vstack([I, -I])


def G_tags(T: int, reduced: bool = False):
    tags = [f"p_max[{t}]" for t in range(T)] + [f"p_min[{t}]" for t in range(T)]
    if reduced:
        return tuple(tags)
    tags += [f"soc_min[{t}]" for t in range(T)] + [f"soc_max[{t}]" for t in range(T)]
    tags += [f"ramp_up[{t}]" for t in range(T - 1)] + [f"ramp_dn[{t}]" for t in range(T - 1)]
    return tuple(tags)


def build_x(v: AggregatorModelVars, h: HorizonConfig) -> np.ndarray:
    T = h.T
    sizes = {"p_max": T, "p_min": T, "s_max": T, "s_min": T, "ramp_up": T - 1, "ramp_dn": T - 1}
    for name, n in sizes.items():
        if getattr(v, name).size != n:
            raise DimensionMismatch(f"{name} has length {getattr(v, name).size}, expected {n}")
    ones = np.ones(T)
    return np.concatenate([v.p_max, -v.p_min, v.s0 * ones - v.s_min, v.s_max - v.s0 * ones,
                           v.ramp_up, -v.ramp_dn])


def aggregator_polytope(x, h: HorizonConfig, reduced: bool = False) -> HPolytope:
    G = build_reduced_G(h) if reduced else build_G(h)
    x = np.asarray(x, dtype=float)
    if x.size != G.shape[0]:
        raise DimensionMismatch(f"x has length {x.size}, G has {G.shape[0]} rows")
    return HPolytope(G, x, G_tags(h.T, reduced))


def membership(P: HPolytope, p, tol: float = 0.0) -> bool:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size != P.dim:
        raise DimensionMismatch(f"point of size {p.size} for a {P.dim}-dimensional polytope")
    return bool(np.all(P.A @ p <= P.b + tol))
