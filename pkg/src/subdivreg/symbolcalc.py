"""Masks, Laurent symbols, sum rules and sum-rule defect sequences."""
from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field
from math import comb
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegenerateMaskError,
    DomainError,
    NormalizationRefused,
    UnsupportedError,
)
from .lattice import DilationSpec, coset_representatives

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


class Mask:
    """Finitely supported real mask on ``{0..N}^s`` stored as a dense array.

    ``coeffs[alpha]`` holds ``a(alpha)``; the array has shape ``(N+1,)*s``.
    """

    __slots__ = ("coeffs", "name")

    def __init__(self, coeffs, name: str = ""):
        c = np.array(coeffs, dtype=float)
        if c.ndim == 0:
            c = c.reshape(1)
        n = max(c.shape)
        if any(d != n for d in c.shape):
            pad = [(0, n - d) for d in c.shape]
            c = np.pad(c, pad)
        if not np.all(np.isfinite(c)):
            raise DegenerateMaskError("mask coefficients must be finite")
        if not np.any(c):
            raise DegenerateMaskError("mask has no nonzero coefficient")
        c.setflags(write=False)
        self.coeffs = c
        self.name = name

    @classmethod
    def from_dict(cls, coeffs: dict, s: int | None = None, N: int | None = None, name: str = "") -> "Mask":
        """Build from ``{multi-index: value}``; integer keys are allowed when s = 1."""
        items = [((k,) if np.isscalar(k) else tuple(k), float(v)) for k, v in coeffs.items()]
        if not items:
            raise DegenerateMaskError("empty mask")
        s = s or len(items[0][0])
        if any(min(k) < 0 for k, _ in items):
            raise ValueError("mask indices must be nonnegative; shift the mask first")
        top = max(max(k) for k, _ in items)
        N = top if N is None else N
        if top > N:
            raise ValueError(f"index {top} exceeds declared support bound {N}")
        c = np.zeros((N + 1,) * s)
        for k, v in items:
            c[k] += v
        return cls(c, name=name)

    @property
    def s(self) -> int:
        return self.coeffs.ndim

    @property
    def N(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def support(self) -> list[tuple[int, ...]]:
        return [tuple(int(i) for i in ix) for ix in np.argwhere(self.coeffs != 0)]

    def __getitem__(self, alpha) -> float:
        alpha = (alpha,) if np.isscalar(alpha) else tuple(alpha)
        if any(a < 0 or a > self.N for a in alpha):
            return 0.0
        return float(self.coeffs[alpha])

    def padded(self, N: int) -> "Mask":
        if N < self.N:
            raise ValueError(f"cannot pad to a smaller box ({N} < {self.N})")
        if N == self.N:
            return self
        return Mask(np.pad(self.coeffs, [(0, N - self.N)] * self.s), name=self.name)

    def scaled(self, c: float) -> "Mask":
        return Mask(self.coeffs * c, name=self.name)

    def norm1(self) -> float:
        return float(np.abs(self.coeffs).sum())

    def __eq__(self, other):
        return isinstance(other, Mask) and self.coeffs.shape == other.coeffs.shape and np.array_equal(
            self.coeffs, other.coeffs
        )

    def __hash__(self):
        return hash((self.coeffs.shape, self.coeffs.tobytes()))

    def __repr__(self):
        label = f"{self.name!r}, " if self.name else ""
        return f"Mask({label}s={self.s}, N={self.N})"


def _as_point(z, s: int) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    if z.shape != (s,):
        raise ValueError(f"expected a point with {s} coordinates, got shape {z.shape}")
    if np.any(z == 0):
        raise DomainError("symbol evaluated at a point with a zero coordinate")
    return z


def _falling(n: int, j: int) -> np.ndarray:
    """Vector of alpha!/(alpha-j)! for alpha = 0..n (zero when alpha < j)."""
    a = np.arange(n + 1, dtype=float)
    out = np.ones(n + 1)
    for i in range(j):
        out *= a - i
    return out


def _derivative_weights(N: int, z: complex, j: int) -> np.ndarray:
    """d^j/dz^j of z^alpha, alpha = 0..N, evaluated at z."""
    a = np.arange(N + 1)
    w = _falling(N, j).astype(complex)
    powers = np.zeros(N + 1, dtype=complex)
    nz = a >= j
    powers[nz] = z ** (a[nz] - j)
    return w * powers


def _contract(coeffs: np.ndarray, vectors: Sequence[np.ndarray]) -> complex:
    out = coeffs.astype(complex)
    for v in vectors:
        out = np.tensordot(out, v, axes=([0], [0]))
    return complex(out)


def symbol_eval(mask: Mask, z) -> complex:
    """a_*(z) = sum_alpha a(alpha) z^alpha."""
    z = _as_point(z, mask.s)
    return _contract(mask.coeffs, [_derivative_weights(mask.N, zi, 0) for zi in z])


def symbol_derivative(mask: Mask, eta, z) -> complex:
    """Mixed partial D^eta a_*(z), differentiating term by term in the z-variables."""
    eta = (int(eta),) if np.isscalar(eta) else tuple(int(e) for e in eta)
    if len(eta) != mask.s or min(eta) < 0:
        raise ValueError(f"eta must be a nonnegative {mask.s}-tuple")
    z = _as_point(z, mask.s)
    return _contract(mask.coeffs, [_derivative_weights(mask.N, zi, j) for zi, j in zip(z, eta)])


def _derivative_scale(mask: Mask, eta) -> float:
    """1-norm of the coefficients of D^eta a_* on the torus; bounds |D^eta a_*| there."""
    out = np.abs(mask.coeffs)
    for j in eta:
        out = np.tensordot(out, _falling(mask.N, j), axes=([0], [0]))
    return float(out)


def multi_indices(s: int, order: int):
    """All eta in N^s with |eta| = order, lexicographic."""
    return [eta for eta in itertools.product(range(order + 1), repeat=s) if sum(eta) == order]


def _dual_points(d: DilationSpec) -> list[np.ndarray]:
    """Xi minus the point (1,...,1)."""
    pts = []
    for p in coset_representatives(d).dual_points:
        arr = np.array(p, dtype=complex)
        if not np.allclose(arr, 1.0, atol=1e-14):
            pts.append(arr)
    return pts


def sum_rule_order(mask: Mask, d: DilationSpec, max_ell: int | None = None, tol: float = 1e-10) -> int:
    """Largest order l+1 of satisfied sum rules (0 if even order 1 fails).

    The vanishing test for D^eta a_* uses ``tol`` times the 1-norm of the
    differentiated coefficients, which reduces to tol * ||a||_1 for eta = 0.
    """
    if mask.s != d.s:
        raise ValueError("mask and dilation dimensions differ")
    if max_ell is None:
        max_ell = mask.N * mask.s
    md = abs(d.det)
    if abs(symbol_eval(mask, np.ones(mask.s)) - md) > tol * max(mask.norm1(), md):
        return 0
    xi = _dual_points(d)
    order = 0
    for j in range(max_ell + 1):
        for eta in multi_indices(mask.s, j):
            bound = tol * max(_derivative_scale(mask, eta), 1.0)
            if any(abs(symbol_derivative(mask, eta, z)) > bound for z in xi):
                return order
        order = j + 1
    return order


# ---------------------------------------------------------------------------
# mask sequences


@dataclass(frozen=True)
class ConstantTail:
    mask: Mask

    def __call__(self, k: int) -> Mask:
        return self.mask


@dataclass(frozen=True)
class PeriodicTail:
    """Level k uses masks[(k - offset) % len(masks)]."""

    masks: tuple
    offset: int = 1

    def __call__(self, k: int) -> Mask:
        return self.masks[(k - self.offset) % len(self.masks)]


@dataclass(frozen=True)
class MembershipTail:
    """Level k uses ``inside`` when ``rule(k)`` is true and ``outside`` otherwise."""

    inside: Mask
    outside: Mask
    rule: Callable[[int], bool]

    def __call__(self, k: int) -> Mask:
        return self.inside if self.rule(k) else self.outside


@dataclass(frozen=True)
class FormulaTail:
    """Level formula k -> Mask with named parameters kept for reports."""

    fn: Callable[..., Mask]
    params: dict = field(default_factory=dict)
    label: str = ""

    def __call__(self, k: int) -> Mask:
        return self.fn(k, **self.params)


class MaskSequence:
    """Level-indexed masks a^(1), a^(2), ... with declared limit points.

    Levels 1..len(prefix) come from ``prefix``; later levels from ``tail``.
    Every level is padded to one common support box.
    """

    def __init__(self, tail, prefix: Sequence[Mask] = (), limit_points: Sequence[Mask] = (), name: str = "",
                 N: int | None = None):
        if not callable(tail):
            tail = ConstantTail(tail)
        self.tail = tail
        self.prefix = tuple(prefix)
        probe = list(self.prefix) + [tail(len(self.prefix) + 1)] + list(limit_points)
        self.s = probe[0].s
        if any(p.s != self.s for p in probe):
            raise ValueError("all masks in a sequence must share the dimension")
        self.N = max(p.N for p in probe) if N is None else N
        self.limit_points = tuple(a.padded(self.N) for a in limit_points)
        self.name = name
        self._cache: dict[int, Mask] = {}

    @classmethod
    def stationary(cls, mask: Mask, name: str = "") -> "MaskSequence":
        return cls(ConstantTail(mask), limit_points=[mask], name=name or mask.name)

    def mask(self, k: int) -> Mask:
        if k < 1:
            raise ValueError("levels start at 1")
        try:
            return self._cache[k]
        except KeyError:
            pass
        raw = self.prefix[k - 1] if k <= len(self.prefix) else self.tail(k)
        if raw.s != self.s:
            raise ValueError(f"level {k} has dimension {raw.s}, expected {self.s}")
        if raw.N > self.N:
            raise ValueError(f"level {k} exceeds the common support box {self.N}")
        out = raw.padded(self.N)
        if len(self._cache) < 4096:
            self._cache[k] = out
        return out

    def __getitem__(self, k: int) -> Mask:
        return self.mask(k)

    def levels(self, start: int, stop: int):
        return [self.mask(k) for k in range(start, stop + 1)]

    def support_union(self, horizon: int = 8) -> list[tuple[int, ...]]:
        pts = set()
        for m in list(self.levels(1, horizon)) + list(self.limit_points):
            pts.update(m.support)
        return sorted(pts)

    def map(self, fn: Callable[[int, Mask], Mask], name: str | None = None, limit_fn=None) -> "MaskSequence":
        """New sequence with level k equal to fn(k, self[k])."""
        src = self
        limits = [limit_fn(a) if limit_fn else a for a in self.limit_points]
        return MaskSequence(FormulaTail(lambda k: fn(k, src.mask(k)), label="mapped"), limit_points=limits,
                            name=name or self.name, N=self.N)

    def check_limit_points(self, start: int = 40, window: int = 40, tol: float = 1e-6) -> dict:
        """For each limit point, the smallest sup-distance to a level in the window."""
        out = {}
        lv = self.levels(start, start + window - 1)
        for i, a in enumerate(self.limit_points):
            dist = min(float(np.max(np.abs(m.coeffs - a.coeffs))) for m in lv)
            out[a.name or f"limit{i}"] = (dist, dist <= tol)
        return out

    @property
    def is_stationary(self) -> bool:
        return not self.prefix and isinstance(self.tail, ConstantTail)

    def __repr__(self):
        return f"MaskSequence({self.name!r}, s={self.s}, N={self.N}, |A|={len(self.limit_points)})"


# ---------------------------------------------------------------------------
# defects


@dataclass
class DefectSequence:
    ell: int
    m: int
    mu: np.ndarray
    delta: np.ndarray
    sigma: np.ndarray
    horizon: int
    mu_floor: np.ndarray
    delta_floor: np.ndarray

    @property
    def levels(self) -> np.ndarray:
        return np.arange(1, self.horizon + 1)

    @property
    def sigma_floor(self) -> np.ndarray:
        return self.delta_floor * float(self.m) ** (self.ell * self.levels)


def _isotropic_factor(d: DilationSpec) -> int:
    return d.m if d.is_isotropic else abs(d.det)


def level_defects(mask: Mask, d: DilationSpec, ell: int, k: int) -> tuple[float, float, float, float]:
    """(mu, delta, mu_floor, delta_floor) for one level.

    The floors bound the rounding error of the finite sums, so values below
    them carry no information.
    """
    ms = abs(d.det)
    one = np.ones(mask.s)
    mu = abs(symbol_eval(mask, one) - ms)
    mu_floor = 64 * _EPS * (mask.norm1() + ms)
    m = _isotropic_factor(d)
    delta, floor = 0.0, 0.0
    xi = _dual_points(d)
    for j in range(ell + 1):
        scale = float(m) ** (-k * j)
        for eta in multi_indices(mask.s, j):
            fl = 64 * _EPS * _derivative_scale(mask, eta) * scale
            floor = max(floor, fl)
            for z in xi:
                delta = max(delta, abs(symbol_derivative(mask, eta, z)) * scale)
    return mu, delta, mu_floor, floor


def defect_sequence(seq: MaskSequence, d: DilationSpec, ell: int = 0, horizon: int = 40) -> DefectSequence:
    """mu_k, delta_k and sigma_k = m^{k ell} delta_k for k = 1..horizon."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if ell < 0:
        raise ValueError("ell must be >= 0")
    if ell > 0 and not d.is_isotropic:
        raise UnsupportedError("defects of order > 1 are only defined for M = mI")
    rows = np.array([level_defects(seq.mask(k), d, ell, k) for k in range(1, horizon + 1)])
    mu, delta, muf, delf = rows.T
    # values inside the rounding floor are reported as exact zeros
    mu = np.where(mu <= muf, 0.0, mu)
    delta = np.where(delta <= delf, 0.0, delta)
    m = _isotropic_factor(d)
    sigma = delta * float(m) ** (ell * np.arange(1, horizon + 1))
    return DefectSequence(ell, m, mu, delta, sigma, horizon, muf, delf)


@dataclass
class SeriesFit:
    verdict: str  # satisfied | violated | inconclusive
    ratio: float  # geometric ratio estimate exp(slope)
    power: float  # p in x_k ~ k^-p
    window: tuple[int, int]
    zero_tail: bool

    def as_dict(self):
        return {"verdict": self.verdict, "ratio": self.ratio, "power": self.power, "window": list(self.window),
                "zero_tail": self.zero_tail}


def fit_decay(x: np.ndarray, floor: np.ndarray | None = None, ratio_cut: float = 0.999,
              power_cut: float = 1.05, reliable_factor: float = 1e4) -> SeriesFit:
    """Classify a nonnegative sequence x_1..x_H as summable or not.

    Entries at or below ``floor`` are treated as exact zeros. The fit window is
    the last half of the informative range (levels up to the last nonzero
    entry), narrowed to entries above ``reliable_factor * floor`` when at
    least four exist. A power-law fit with p <= power_cut means violated; otherwise a
    geometric ratio below ratio_cut means satisfied.
    """
    x = np.asarray(x, dtype=float)
    H = len(x)
    floor = np.zeros(H) if floor is None else np.asarray(floor, dtype=float)
    live = x > floor
    if not live.any():
        return SeriesFit("satisfied", 0.0, np.inf, (1, H), True)
    last = int(np.nonzero(live)[0][-1]) + 1  # 1-based
    # a zero tail is an abrupt drop to exact zeros; a gradual decay into the
    # rounding floor is not one and is judged by the fit
    zero_tail = last < H and x[last - 1] > reliable_factor * floor[last - 1]
    # regress only on values well above the rounding floor when there are enough of them
    reliable = x > reliable_factor * floor
    if reliable.sum() >= 4:
        live = reliable
        last = int(np.nonzero(live)[0][-1]) + 1
    lo = max(1, last // 2 + 1) if last >= 4 else 1
    k = np.arange(lo, last + 1)
    sel = live[lo - 1:last]
    k, y = k[sel], x[lo - 1:last][sel]
    if len(k) < 2:
        # a single informative level followed by zeros
        return SeriesFit("satisfied" if zero_tail else "inconclusive", 0.0, np.inf, (lo, last), zero_tail)
    slope = np.polyfit(k, np.log(y), 1)[0]
    pslope = np.polyfit(np.log(k), np.log(y), 1)[0]
    ratio, power = float(np.exp(slope)), float(-pslope)
    if power <= power_cut and not zero_tail:
        verdict = "violated"
    elif ratio < ratio_cut or zero_tail:
        verdict = "satisfied"
    else:
        verdict = "inconclusive"
    return SeriesFit(verdict, ratio, power, (int(lo), int(last)), zero_tail)


@dataclass
class DefectVerdict:
    verdict: str
    mu_fit: SeriesFit
    sigma_fit: SeriesFit
    delta_fit: SeriesFit
    limsup_delta_root: float  # estimate of limsup delta_k^{1/k}
    delta_rate: float  # estimate of -limsup log_m(delta_k)/k
    horizon: int
    empirical: bool = True

    def as_dict(self):
        return {
            "verdict": self.verdict,
            "mu": self.mu_fit.as_dict(),
            "sigma": self.sigma_fit.as_dict(),
            "delta": self.delta_fit.as_dict(),
            "limsup_delta_root": self.limsup_delta_root,
            "delta_rate": self.delta_rate,
            "horizon": self.horizon,
            "empirical": self.empirical,
        }


def approximate_sum_rule_verdict(ds: DefectSequence) -> DefectVerdict:
    """Heuristic summability verdict for mu_k and sigma_k plus delta-decay estimates."""
    if ds.horizon < 8:
        raise ValueError("need a horizon of at least 8 levels")
    mu_fit = fit_decay(ds.mu, ds.mu_floor)
    sig_fit = fit_decay(ds.sigma, ds.sigma_floor)
    del_fit = fit_decay(ds.delta, ds.delta_floor)
    verdicts = {mu_fit.verdict, sig_fit.verdict}
    if "violated" in verdicts:
        verdict = "violated"
    elif verdicts == {"satisfied"}:
        verdict = "satisfied"
    else:
        verdict = "inconclusive"
    root = del_fit.ratio
    rate = np.inf if root == 0 else -np.log(root) / np.log(ds.m)
    return DefectVerdict(verdict, mu_fit, sig_fit, del_fit, root, float(rate), ds.horizon)


def normalize_sequence(seq: MaskSequence, d: DilationSpec, horizon: int = 40, force: bool = False) -> MaskSequence:
    """Rescale every level so that a_*^(k)(1) = m^s.

    Refuses when mu_k does not look summable, because rescaling would then
    change the limit behaviour of the scheme.
    """
    ms = float(abs(d.det))
    one = np.ones(seq.s)
    for k in range(1, horizon + 1):
        v = symbol_eval(seq.mask(k), one).real
        if abs(v) <= 64 * _EPS * seq.mask(k).norm1():
            raise DegenerateMaskError(f"a_*(1) vanishes at level {k}")
    ds = defect_sequence(seq, d, 0, max(horizon, 8))
    fit = fit_decay(ds.mu, ds.mu_floor)
    if fit.verdict != "satisfied":
        msg = (f"mu_k = |a_*(1) - {ms:g}| is not summable ({fit.verdict}, decay power {fit.power:.3g}); "
               "rescaling changes the scheme, e.g. it turns (1+1/k)a back into the stationary scheme of a")
        if not force:
            raise NormalizationRefused(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)

    def rescale(mask: Mask) -> Mask:
        v = symbol_eval(mask, one).real
        if v == ms:
            return mask
        return mask.scaled(ms / v)

    return seq.map(lambda k, a: rescale(a), name=seq.name, limit_fn=rescale)


# ---------------------------------------------------------------------------
# univariate root utilities


def _poly_coeffs(mask: Mask) -> np.ndarray:
    if mask.s != 1:
        raise UnsupportedError("only univariate masks are supported here")
    c = np.trim_zeros(mask.coeffs, "b")
    return c


def symmetric_roots_on_circle(mask: Mask, tol: float = 1e-8) -> list[tuple[complex, complex]]:
    """Pairs {z, -z} of roots of sum a(alpha) z^alpha with |z| = 1."""
    c = np.trim_zeros(_poly_coeffs(mask), "f")
    if len(c) < 2:
        return []
    roots = np.roots(c[::-1])
    on = [z for z in roots if abs(abs(z) - 1) <= tol]
    pairs = []
    for i, z in enumerate(on):
        for w in on[i + 1:]:
            if abs(z + w) <= tol:
                # canonical representative: Re > 0, or Re = 0 and Im > 0
                a = z if (z.real > tol or (abs(z.real) <= tol and z.imag > 0)) else w
                a = complex(a)
                if not any(abs(a - p[0]) <= tol for p in pairs):
                    pairs.append((a, -a))
    pairs.sort(key=lambda p: (round(p[0].real, 9), round(p[0].imag, 9)))
    return pairs


def daubechies_mask(n: int) -> Mask:
    """Classical minimal-support Daubechies mask with n vanishing moments, a_*(1) = 2."""
    if not 2 <= int(n) <= 10:
        raise ValueError(f"Daubechies order must be in 2..10, got {n}")
    n = int(n)
    # P(y) = sum_j C(n-1+j, j) y^j with y = (2 - z - 1/z)/4
    P = [comb(n - 1 + j, j) for j in range(n)]
    yroots = np.roots(P[::-1])
    zroots = []
    for y in yroots:
        # z^2 - (2 - 4y) z + 1 = 0; keep the root inside the unit disk
        r = np.roots([1.0, -(2 - 4 * y), 1.0])
        zroots.append(r[np.argmin(np.abs(r))])
    zroots = sorted(zroots, key=lambda z: (round(z.real, 12), round(z.imag, 12)))
    q = np.real_if_close(np.poly(zroots), tol=1e6).real
    q = q[::-1] / q.sum()  # ascending powers, Q(1) = 1
    binom = np.array([comb(n, j) for j in range(n + 1)], dtype=float) / 2.0 ** n
    a = 2.0 * np.convolve(binom, q)
    # reversed ordering puts the large coefficients first, the customary layout
    return Mask(a[::-1], name=f"daubechies{n}")


