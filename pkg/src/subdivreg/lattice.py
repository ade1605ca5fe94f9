"""Dilation matrices, coset representatives and the index set K.

All integer point sets are returned in lexicographic order; every matrix
built elsewhere in the package inherits that ordering.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil, floor

import numpy as np

from .errors import InvalidDilationError


@dataclass(frozen=True)
class DilationSpec:
    """Integer expanding dilation matrix ``M`` acting on ``Z^s``."""

    M: tuple[tuple[int, ...], ...]
    isotropic_m: int | None = field(default=None, compare=False)

    def __post_init__(self):
        M = np.array(self.M, dtype=np.int64)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
            raise InvalidDilationError(f"M must be a square integer matrix, got shape {M.shape}")
        det = round(np.linalg.det(M))
        if abs(det) < 2:
            raise InvalidDilationError(f"|det M| = {abs(det)} < 2")
        if np.max(np.abs(np.linalg.eigvals(np.linalg.inv(M.astype(float))))) >= 1.0:
            raise InvalidDilationError("M is not expanding: rho(M^-1) >= 1")
        s = M.shape[0]
        diag = M[0, 0]
        iso = diag if np.array_equal(M, diag * np.eye(s, dtype=np.int64)) else None
        object.__setattr__(self, "M", tuple(tuple(int(x) for x in row) for row in M))
        object.__setattr__(self, "isotropic_m", None if iso is None else int(iso))

    @classmethod
    def isotropic(cls, m: int, s: int = 1) -> "DilationSpec":
        if m < 2:
            raise InvalidDilationError(f"isotropic dilation needs m >= 2, got {m}")
        return cls(tuple(tuple(m if i == j else 0 for j in range(s)) for i in range(s)))

    @property
    def s(self) -> int:
        return len(self.M)

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.M, dtype=np.int64)

    @property
    def det(self) -> int:
        return int(round(np.linalg.det(self.matrix)))

    @property
    def m(self) -> int:
        """Isotropic factor; raises for anisotropic dilations."""
        if self.isotropic_m is None:
            raise InvalidDilationError("dilation is not of the form m*I")
        return self.isotropic_m

    @property
    def is_isotropic(self) -> bool:
        return self.isotropic_m is not None


@dataclass(frozen=True)
class CosetSet:
    reps: tuple[tuple[int, ...], ...]
    dual_points: tuple[tuple[complex, ...], ...]

    def __len__(self):
        return len(self.reps)


@dataclass(frozen=True)
class IndexSetK:
    points: tuple[tuple[int, ...], ...]
    support_bound: int

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __contains__(self, p):
        return tuple(p) in self._lookup

    @property
    def _lookup(self) -> dict:
        # cached position map; frozen dataclass so stash it via object.__setattr__
        try:
            return self.__dict__["_pos"]
        except KeyError:
            pos = {p: i for i, p in enumerate(self.points)}
            object.__setattr__(self, "_pos", pos)
            return pos

    def index(self, p) -> int:
        return self._lookup[tuple(p)]

    @property
    def array(self) -> np.ndarray:
        return np.array(self.points, dtype=np.int64).reshape(len(self.points), -1)


def _adjugate(M: np.ndarray) -> np.ndarray:
    """Integer adjugate, exact for the small matrices used here."""
    s = M.shape[0]
    if s == 1:
        return np.array([[1]], dtype=np.int64)
    adj = np.zeros_like(M)
    for i in range(s):
        for j in range(s):
            minor = np.delete(np.delete(M, i, axis=0), j, axis=1)
            adj[j, i] = (-1) ** (i + j) * int(round(np.linalg.det(minor)))
    return adj


def _fundamental_domain_points(M: np.ndarray) -> list[tuple[int, ...]]:
    """Integer points of M[0,1)^s, i.e. representatives of Z^s / M Z^s."""
    s = M.shape[0]
    det = int(round(np.linalg.det(M)))
    adj = _adjugate(M)
    corners = np.array(list(itertools.product((0, 1), repeat=s))) @ M.T
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    reps = []
    for x in itertools.product(*(range(int(a), int(b) + 1) for a, b in zip(lo, hi))):
        # M^{-1} x = adj x / det must lie in [0,1)^s
        y = adj @ np.array(x, dtype=np.int64)
        if det < 0:
            y = -y
        if np.all(y >= 0) and np.all(y < abs(det)):
            reps.append(tuple(int(v) for v in x))
    return sorted(reps)


def coset_representatives(d: DilationSpec) -> CosetSet:
    """Representatives E of Z^s/MZ^s and the dual points Xi on the torus."""
    if abs(d.det) < 2:
        raise InvalidDilationError("|det M| < 2")
    if d.is_isotropic:
        m = d.m
        reps = tuple(itertools.product(range(m), repeat=d.s))
        dual = tuple(tuple(complex(np.exp(-2j * np.pi * e / m)) for e in rep) for rep in reps)
        return CosetSet(reps, dual)
    M = d.matrix
    reps = tuple(_fundamental_domain_points(M))
    MinvT = np.linalg.inv(M.astype(float)).T
    dual = []
    for xi in _fundamental_domain_points(M.T):
        theta = MinvT @ np.array(xi, dtype=float)
        dual.append(tuple(complex(np.exp(2j * np.pi * t)) for t in theta))
    return CosetSet(reps, tuple(dual))


def _generator_box(d: DilationSpec, N: int) -> tuple[int, int]:
    """Per-coordinate range of the digit set G."""
    if d.is_isotropic:
        return -d.m, N + 1
    reps = np.array(coset_representatives(d).reps)
    c = int(np.abs(reps).max()) + 1
    return -c, N + c


def _isotropic_k(m: int, s: int, N: int) -> list[tuple[int, ...]]:
    lo = Fraction(-m, m - 1)
    hi = Fraction(N + 1, m - 1)
    rng = range(ceil(lo), floor(hi) + 1)
    return list(itertools.product(rng, repeat=s))


def _iterated_k(d: DilationSpec, N: int) -> list[tuple[int, ...]]:
    """Largest S in a bounding box with S subset of M^-1(S + G), by fixed-point iteration."""
    M = d.matrix
    s = d.s
    g_lo, g_hi = _generator_box(d, N)
    Minv = np.linalg.inv(M.astype(float))
    # sum_r ||M^-r||_inf, using a power R with ||M^-R|| < 1/2 for the tail
    norms, P = [], np.eye(s)
    while True:
        P = P @ Minv
        norms.append(np.linalg.norm(P, np.inf))
        if norms[-1] < 0.5:
            break
        if len(norms) > 200:
            raise InvalidDilationError("M is not expanding enough to bound K")
    total = sum(norms) / (1.0 - norms[-1])
    radius = int(ceil(total * max(abs(g_lo), abs(g_hi)))) + 1
    G = list(itertools.product(range(g_lo, g_hi + 1), repeat=s))
    current = set(itertools.product(range(-radius, radius + 1), repeat=s))
    G_arr = np.array(G, dtype=np.int64)
    while True:
        keep = set()
        for a in current:
            Ma = M @ np.array(a, dtype=np.int64)
            cand = Ma[None, :] - G_arr
            if any(tuple(int(v) for v in c) in current for c in cand):
                keep.add(a)
        if keep == current:
            break
        current = keep
    return sorted(current)


def compute_index_set(d: DilationSpec, N: int, method: str = "auto") -> IndexSetK:
    """Integer points of sum_{r>=1} M^-r G with G = {-m..N+1}^s."""
    if N < 1:
        raise ValueError(f"support bound N must be >= 1, got {N}")
    if method == "auto":
        method = "interval" if d.is_isotropic else "iterate"
    if method == "interval":
        pts = _isotropic_k(d.m, d.s, N)
    elif method == "iterate":
        pts = _iterated_k(d, N)
    else:
        raise ValueError(f"unknown method {method!r}")
    return IndexSetK(tuple(sorted(pts)), N)


def minimal_invariant_set(
    d: DilationSpec,
    support,
    K: IndexSetK | None = None,
    seed=None,
) -> IndexSetK:
    """Smallest subset of K closed under the transition-matrix reachability rule.

    ``support`` is an iterable of multi-indices where some mask in the family
    is nonzero. A set S is closed when, for every column ``beta`` in S, every
    row ``alpha`` with ``a(eps + M alpha - beta) != 0`` for some coset ``eps``
    is again in S; then vectors supported on S form an invariant subspace of
    every T_eps. The default seed is the support intersected with the box
    ``[0, N/(m-1)]^s`` that contains the refinable function's support.
    """
    support = sorted({tuple(int(v) for v in a) for a in support})
    if not support:
        raise ValueError("support must be nonempty")
    s = d.s
    N = max(max(a) for a in support)
    if K is None:
        K = compute_index_set(d, max(N, 1))
    M = d.matrix
    reps = np.array(coset_representatives(d).reps, dtype=np.int64).reshape(-1, s)
    supp = np.array(support, dtype=np.int64)
    adj = _adjugate(M)
    det = d.det

    def rows_for(beta):
        b = np.array(beta, dtype=np.int64)
        out = set()
        # M alpha = gamma - eps + beta
        targets = (supp[:, None, :] - reps[None, :, :] + b).reshape(-1, s)
        for t in targets:
            y = adj @ t
            if np.all(y % det == 0):
                out.add(tuple(int(v) for v in y // det))
        return out

    if seed is None:
        if d.is_isotropic:
            top = N / (d.m - 1)
            seed = [a for a in support if all(0 <= c <= top for c in a)]
        else:
            seed = list(support)
    seed = [tuple(a) for a in seed if tuple(a) in K]
    if not seed:
        seed = [p for p in support if p in K][:1]
    closed = set(seed)
    frontier = list(seed)
    while frontier:
        beta = frontier.pop()
        for alpha in rows_for(beta):
            if alpha not in closed and alpha in K:
                closed.add(alpha)
                frontier.append(alpha)
    return IndexSetK(tuple(sorted(closed)), K.support_bound)
