"""Subdivision recursion, basic limit function samples and truncated Fourier products."""
from __future__ import annotations

import csv
import io
import warnings
from math import comb
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve

from .lattice import DilationSpec
from .symbolcalc import Mask, MaskSequence, defect_sequence, fit_decay, symbol_eval
from .errors import UnsupportedError


@dataclass
class RefinementData:
    """Dense samples c(alpha) for alpha = origin + index, living on the grid M^-level Z^s.

    ``offset`` is the shift tau with which sample alpha sits at M^-level (alpha + tau)
    when the centred placement is requested.
    """

    level: int
    values: np.ndarray
    origin: tuple
    d: DilationSpec
    source: str = ""
    offset: np.ndarray | None = None

    @property
    def s(self) -> int:
        return self.values.ndim

    def indices(self) -> np.ndarray:
        """Integer grid indices of all stored entries, lexicographic, shape (n, s)."""
        grids = np.meshgrid(*[np.arange(n) + o for n, o in zip(self.values.shape, self.origin)], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def points(self, centered: bool = False) -> np.ndarray:
        idx = self.indices().astype(float)
        if centered and self.offset is not None:
            idx = idx + self.offset[None, :]
        Minv = np.linalg.matrix_power(np.linalg.inv(self.d.matrix.astype(float)), self.level)
        return idx @ Minv.T

    def value_at(self, alpha) -> float:
        pos = tuple(int(a) - o for a, o in zip(np.atleast_1d(alpha), self.origin))
        if any(p < 0 or p >= n for p, n in zip(pos, self.values.shape)):
            return 0.0
        return float(self.values[pos])

    def as_dict(self) -> dict:
        """Finite map from grid index to value, zeros dropped."""
        out = {}
        for idx, v in zip(self.indices(), self.values.ravel()):
            if v != 0:
                out[tuple(int(i) for i in idx)] = float(v)
        return out

    def trimmed(self) -> "RefinementData":
        nz = np.argwhere(self.values != 0)
        if len(nz) == 0:
            return self
        lo, hi = nz.min(axis=0), nz.max(axis=0) + 1
        vals = self.values[tuple(slice(a, b) for a, b in zip(lo, hi))]
        origin = tuple(int(o + l) for o, l in zip(self.origin, lo))
        return RefinementData(self.level, vals, origin, self.d, self.source, self.offset)


def delta_data(d: DilationSpec, level: int = 0) -> RefinementData:
    return RefinementData(level, np.ones((1,) * d.s), (0,) * d.s, d, "delta")


def subdivide(data: RefinementData, mask: Mask, d: DilationSpec | None = None) -> RefinementData:
    """c'(alpha) = sum_beta a(alpha - M beta) c(beta); the level goes up by one."""
    d = d or data.d
    if mask.s != data.s:
        raise ValueError("mask and data dimensions differ")
    M = d.matrix
    c = data.values
    if d.is_isotropic:
        m = d.m
        up = np.zeros(tuple(m * (n - 1) + 1 for n in c.shape))
        up[tuple(slice(None, None, m) for _ in c.shape)] = c
        vals = convolve(up, mask.coeffs, method="direct")
        origin = tuple(m * o for o in data.origin)
    else:
        src = data.indices()
        img = src @ M.T
        supp = np.array(mask.support, dtype=np.int64)
        lo = img.min(axis=0)
        hi = img.max(axis=0) + mask.N
        vals = np.zeros(tuple(int(h - l + 1) for l, h in zip(lo, hi)))
        cv = c.ravel()
        for g in supp:
            pos = img + g - lo
            np.add.at(vals, tuple(pos.T), cv * mask.coeffs[tuple(g)])
        origin = tuple(int(v) for v in lo)
    return RefinementData(data.level + 1, vals, origin, d, data.source, None)


def mean_shift(mask: Mask) -> np.ndarray:
    """First moment sum(gamma a(gamma)) / sum(a(gamma))."""
    a = mask.coeffs
    tot = a.sum()
    grids = np.meshgrid(*[np.arange(n) for n in a.shape], indexing="ij")
    return np.array([(g * a).sum() / tot for g in grids])


def sample_offset(seq: MaskSequence, d: DilationSpec, level: int, terms: int = 60) -> np.ndarray:
    """tau_L = sum_i M^-(i+1) g_{L+i}, with g_k the first moment of a^(k).

    Samples of level L sit at M^-L (alpha + tau_L); for a stationary mask
    this is the centre g/(m-1) of its refinable function's support.
    """
    Minv = np.linalg.inv(d.matrix.astype(float))
    tau = np.zeros(d.s)
    P = Minv.copy()
    for i in range(terms):
        tau += P @ mean_shift(seq.mask(level + i))
        P = P @ Minv
    return tau


def _run(seq: MaskSequence, d: DilationSpec, levels: int, start_level: int):
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if start_level < 1:
        raise ValueError("levels start at 1")
    data = delta_data(d)
    data.source = seq.name
    prev = data
    for k in range(start_level, start_level + levels):
        prev, data = data, subdivide(data, seq.mask(k), d)
    return prev, data


def basic_limit_samples(seq: MaskSequence, d: DilationSpec, levels: int, start_level: int = 1) -> RefinementData:
    """S_{a^(start+levels-1)} ... S_{a^(start)} delta, the coarsest operator applied first.

    The result approximates phi_start on the grid M^-levels Z^s.
    """
    _, data = _run(seq, d, levels, start_level)
    data.offset = sample_offset(seq, d, start_level + levels)
    return data


def bspline_closed_form(x, degree: int) -> np.ndarray:
    """Cardinal B-spline of the given degree supported on [0, degree + 1]."""
    x = np.asarray(x, dtype=float)
    n = degree + 1
    out = np.zeros_like(x)
    fact = float(np.prod(np.arange(1, degree + 1))) if degree else 1.0
    for j in range(n + 1):
        out += (-1) ** j * comb(n, j) * np.where(x - j > 0, (x - j) ** degree, 0.0)
    out /= fact
    out[(x < 0) | (x > n)] = 0.0
    return out


def refinability_residual(seq: MaskSequence, d: DilationSpec, k: int, levels: int) -> float:
    """sup |phi_k - sum_alpha a^(k)(alpha) phi_{k+1}(M . - alpha)| on the common grid of `levels` levels."""
    if not d.is_isotropic:
        raise UnsupportedError("the refinability residual is implemented for M = mI")
    fk = basic_limit_samples(seq, d, levels, k)
    fk1 = basic_limit_samples(seq, d, levels - 1, k + 1)
    m = d.m
    step = m ** (levels - 1)
    a = seq.mask(k)
    lo = np.array(fk.origin)
    shape = np.array(fk.values.shape)
    for alpha in a.support:
        lo = np.minimum(lo, np.array(fk1.origin) + step * np.array(alpha))
        shape_hi = np.array(fk1.origin) + step * np.array(alpha) + np.array(fk1.values.shape)
        shape = np.maximum(shape, shape_hi - lo)
    hi = np.maximum(np.array(fk.origin) + np.array(fk.values.shape), lo + shape)
    acc = np.zeros(tuple(int(v) for v in hi - lo))
    sl = tuple(slice(int(o - l), int(o - l + n)) for o, l, n in zip(fk.origin, lo, fk.values.shape))
    acc[sl] += fk.values
    for alpha in a.support:
        o = np.array(fk1.origin) + step * np.array(alpha)
        sl = tuple(slice(int(oo - l), int(oo - l + n)) for oo, l, n in zip(o, lo, fk1.values.shape))
        acc[sl] -= a.coeffs[alpha] * fk1.values
    return float(np.abs(acc).max())


def empirical_holder(seq: MaskSequence, d: DilationSpec, levels: int = 12, order: int = 2,
                     start_level: int = 1) -> float:
    """log_m of the ratio of max |order-th differences| across the two finest levels.

    A diagnostic only: differences of order r detect exponents up to r.
    """
    if not d.is_isotropic:
        raise UnsupportedError("empirical Hölder estimate needs M = mI")
    prev, last = _run(seq, d, levels, start_level)

    def size(c):
        best = 0.0
        for ax in range(c.ndim):
            if c.shape[ax] > order:
                best = max(best, float(np.abs(np.diff(c, n=order, axis=ax)).max()))
        return best

    a, b = size(prev.values), size(last.values)
    if b == 0:
        return np.inf
    return float(np.log(a / b) / np.log(d.m))


@dataclass
class FourierProduct:
    value: complex
    depth: int
    partial: list = field(default_factory=list)  # |prod_{k<=j}| for j = 1..depth
    tail_estimate: float = 0.0
    divergent: bool = False
    warning: str = ""

    def as_dict(self):
        return {"value": [self.value.real, self.value.imag], "depth": self.depth, "tail_estimate": self.tail_estimate,
                "divergent": self.divergent, "warning": self.warning}


def _p(mask: Mask, m: int, x: float) -> complex:
    return symbol_eval(mask, np.exp(-2j * np.pi * x)) / m


def fourier_product(seq: MaskSequence, d: DilationSpec, omega: float, depth: int = 30,
                    tail_levels: int = 60) -> FourierProduct:
    """prod_{k=1}^{depth} p_k(m^-k omega) with p_k(x) = m^-1 a_*^(k)(e^{-2 pi i x})."""
    if seq.s != 1 or d.s != 1:
        raise UnsupportedError("Fourier products are implemented for s = 1")
    m = d.m
    val = 1.0 + 0j
    partial = []
    for k in range(1, depth + 1):
        val *= _p(seq.mask(k), m, omega * float(m) ** (-k))
        partial.append(abs(val))
    # tail: |p_k(x) - 1| <= |p_k(0) - 1| + 2 pi |x| sum |alpha a(alpha)| / m
    t = 0.0
    for k in range(depth + 1, depth + tail_levels + 1):
        a = seq.mask(k)
        x = abs(omega) * float(m) ** (-k)
        first = float(np.abs(np.arange(a.N + 1) * a.coeffs).sum())
        t += abs(_p(a, m, 0.0) - 1) + 2 * np.pi * x * first / m
    tail = float(abs(val) * (np.expm1(t))) if np.isfinite(t) else np.inf
    ds = defect_sequence(seq, d, 0, max(depth, 8))
    mu_fit = fit_decay(ds.mu, ds.mu_floor)
    divergent, msg = False, ""
    if mu_fit.verdict != "satisfied":
        divergent = True
        msg = (f"mu_k is not summable ({mu_fit.verdict}); the product at omega = 0 is prod p_k(0), which diverges "
               "(phi_hat(0) = infinity) although each level is a rescaled convergent mask")
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        tail = np.inf
    return FourierProduct(complex(val), depth, partial, tail, divergent, msg)


def write_csv(data: RefinementData, out=None, centered: bool = False) -> str:
    """Columns x0..x{s-1}, value; one row per grid point in lexicographic index order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i}" for i in range(data.s)] + ["value"])
    pts = data.points(centered)
    for p, v in zip(pts, data.values.ravel()):
        w.writerow([repr(float(x)) for x in p] + [repr(float(v))])
    text = buf.getvalue()
    if out is not None:
        if hasattr(out, "write"):
            out.write(text)
        else:
            with open(out, "w", newline="") as fh:
                fh.write(text)
    return text
