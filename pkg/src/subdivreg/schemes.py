"""Built-in masks, level-dependent mask sequences and displayed matrix fixtures."""
from __future__ import annotations

import cmath
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import ConfigError, UnknownSchemeError
from .jsr import MatrixSet
from .lattice import DilationSpec
from .symbolcalc import FormulaTail, Mask, MaskSequence, MembershipTail, daubechies_mask


@dataclass
class SchemeDescriptor:
    name: str
    s: int
    dilation: DilationSpec
    kind: str  # stationary | formula | alternating | convex
    sequence: MaskSequence
    known: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    @property
    def mask(self) -> Mask:
        """The stationary mask, or the first limit point of a sequence."""
        return self.sequence.limit_points[0]

    @property
    def limit_points(self) -> tuple:
        return self.sequence.limit_points


# ---------------------------------------------------------------------------
# stationary masks


def _poly_mask(coeffs, name, scale=1.0) -> Mask:
    return Mask(np.asarray(coeffs, dtype=float) * scale, name=name)


def shift_mask(a: Mask, offset, N: int | None = None) -> Mask:
    """Translate a mask by a nonnegative offset; the box grows to hold it."""
    off = tuple(int(o) for o in np.broadcast_to(offset, (a.s,)))
    if min(off) < 0:
        raise ValueError("offsets must be nonnegative")
    top = a.N + max(off)
    N = top if N is None else N
    if N < top:
        raise ValueError("box too small for the shifted mask")
    c = np.zeros((N + 1,) * a.s)
    c[tuple(slice(o, o + a.N + 1) for o in off)] = a.coeffs
    return Mask(c, name=a.name)


def chaikin() -> Mask:
    return _poly_mask([1, 3, 3, 1], "chaikin", 0.25)


def hat() -> Mask:
    return _poly_mask([1, 2, 1], "hat", 0.5)


def quadratic_bspline() -> Mask:
    return _poly_mask([1, 3, 3, 1], "quadratic_bspline", 0.25)


def cubic_bspline() -> Mask:
    return _poly_mask([1, 4, 6, 4, 1], "cubic_bspline", 1 / 8)


def fourpoint(w: float = 1 / 16) -> Mask:
    # -w, 0, 1/2 + w, 1, 1/2 + w, 0, -w in the normalization a_*(1) = 2
    return _poly_mask([-w, 0, 0.5 + w, 1, 0.5 + w, 0, -w], "fourpoint")


_DIRS = ((1, 0), (0, 1), (1, 1))


def _triangles_at(v):
    """The six triangles of the three-direction mesh that contain vertex v."""
    x, y = v
    out = []
    for bx, by in ((x, y), (x - 1, y), (x, y - 1), (x - 1, y - 1)):
        for t in (((bx, by), (bx + 1, by), (bx + 1, by + 1)), ((bx, by), (bx, by + 1), (bx + 1, by + 1))):
            if (x, y) in t:
                out.append(frozenset(t))
    return set(out)


def _edge_triangles(p, q):
    return [t for t in _triangles_at(p) if q in t]


def butterfly(w: float = 1 / 16) -> Mask:
    """Butterfly mask on the three-direction mesh, shifted by (3, 3) into {0..6}^2."""
    coef: dict = {(0, 0): 1.0}
    for e in _DIRS:
        for sgn in (1, -1):
            e2 = (sgn * e[0], sgn * e[1])
            p, q = (0, 0), e2
            # new point between p and q sits at fine index e2; weight of coarse v is a(e2 - 2v)
            stencil = {p: 0.5, q: 0.5}
            wings = _edge_triangles(p, q)
            for t in wings:
                (r,) = t - {p, q}
                stencil[r] = stencil.get(r, 0.0) + 2 * w
                for a, b in ((p, r), (q, r)):
                    for t2 in _edge_triangles(a, b):
                        if t2 != t:
                            (o,) = t2 - {a, b}
                            stencil[o] = stencil.get(o, 0.0) - w
            for v, val in stencil.items():
                key = (e2[0] - 2 * v[0], e2[1] - 2 * v[1])
                coef[key] = val
    c = np.zeros((7, 7))
    for (i, j), val in coef.items():
        c[i + 3, j + 3] = val
    return Mask(c, name="butterfly")


def _box_spline(dirs, name) -> Mask:
    """Symbol prod_d (1 + z^d) scaled so that a_*(1) = 4; directions with nonnegative entries."""
    c = np.ones((1, 1))
    for d in dirs:
        f = np.zeros((d[0] + 1, d[1] + 1))
        f[0, 0] = 1.0
        f[d] = 1.0
        c = _conv2(c, f)
    c = c * 4.0 / c.sum()
    return Mask(c, name=name)


def _conv2(a, b):
    out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1))
    for (i, j), v in np.ndenumerate(b):
        if v:
            out[i:i + a.shape[0], j:j + a.shape[1]] += v * a
    return out


def courant_box_spline() -> Mask:
    """Box spline B_111 (piecewise linear hat on the three-direction mesh), support {0..2}^2."""
    return _box_spline([(1, 0), (0, 1), (1, 1)], "courant_box_spline")


def loop() -> Mask:
    """Loop scheme mask, i.e. the box spline B_222, laid out as the k -> oo limit of the perturbed Loop sequence."""
    c = np.array([[0, 0, 1, 2, 1], [0, 2, 6, 6, 2], [1, 6, 10, 6, 1], [2, 6, 6, 2, 0], [1, 2, 1, 0, 0]]) / 16
    return Mask(c, name="loop")


def _ternary(poly, scale, name) -> Mask:
    # poly in ascending powers; the z^-6 factor only shifts the mask into {0..N}
    return _poly_mask(np.asarray(poly, dtype=float) * scale, name)


_Z2Z1 = np.array([1.0, 1.0, 1.0])  # z^2 + z + 1


def _pmul(*polys):
    out = np.ones(1)
    for p in polys:
        out = P.polymul(out, p)
    return out


def _ppow(p, k):
    return _pmul(*([p] * k)) if k else np.ones(1)


def ternary_dubuc_deslaurier_dual() -> Mask:
    """c_*(z) = -(1/1296) (z^2+z+1)^4 (z+1) (35 z^2 - 94 z + 35), shifted by z^6."""
    poly = _pmul(_ppow(_Z2Z1, 4), [1, 1], [35, -94, 35])
    return _ternary(poly, -1 / 1296, "ternary_dubuc_deslaurier_dual")


def ternary_limit_d() -> Mask:
    """d_*(z) = (1/162) (z^2+z+1)^5 (z+1), shifted by z^6 (sign chosen so that d_*(1) = 3)."""
    poly = _pmul(_ppow(_Z2Z1, 5), [1, 1])
    return _ternary(poly, 1 / 162, "ternary_limit_d")


# ---------------------------------------------------------------------------
# level-dependent sequences


def example1_scaled(a: Mask | None = None) -> MaskSequence:
    """a^(k) = (1 + 1/k) a; asymptotically similar to a, mu_k = m^s/k."""
    a = chaikin() if a is None else a
    return MaskSequence(FormulaTail(lambda k: a.scaled(1 + 1 / k), label="(1+1/k)a"), limit_points=[a],
                        name=f"example1_scaled({a.name})")


def example2_convex(a: Mask | None = None, b: Mask | None = None) -> MaskSequence:
    """a^(k) = (1 - 1/k) a + (1/k) b. Default: butterfly with the Courant element centred on it."""
    if a is None:
        a = butterfly()
    if b is None:
        b = shift_mask(courant_box_spline(), (2, 2), N=6)
    N = max(a.N, b.N)
    a, b = a.padded(N), b.padded(N)
    A, B = a.coeffs, b.coeffs

    def level(k):
        return Mask((1 - 1 / k) * A + (1 / k) * B, name=f"example2[{k}]")

    return MaskSequence(FormulaTail(level, label="convex"), limit_points=[a],
                        name=f"example2_convex({a.name},{b.name})", N=N)


_RULES: dict[str, Callable[[int], bool]] = {
    "even": lambda k: k % 2 == 0,
    "odd": lambda k: k % 2 == 1,
}


def example3_alternating(a: Mask | None = None, c: Mask | None = None, rule="even") -> MaskSequence:
    """a^(k) = a for k in I, c otherwise; I defaults to the even levels."""
    a = cubic_bspline() if a is None else a
    c = fourpoint() if c is None else c
    if isinstance(rule, str):
        try:
            rule = _RULES[rule]
        except KeyError:
            raise ConfigError(f"unknown membership rule {rule!r}; use one of {sorted(_RULES)}") from None
    N = max(a.N, c.N)
    a, c = a.padded(N), c.padded(N)
    return MaskSequence(MembershipTail(a, c, rule), limit_points=[c, a],
                        name=f"example3_alternating({a.name},{c.name})", N=N)


def _check_lambda(lam) -> complex:
    lam = complex(lam)
    real_ok = lam.imag == 0 and lam.real >= 0
    imag_ok = lam.real == 0 and lam.imag > 0
    if not (real_ok or imag_ok):
        raise ConfigError(f"lambda must lie in R+ or iR+, got {lam}")
    return lam


def ternary_w(k: int, lam) -> float:
    """w^(k) = (e^{t} + e^{-t})/2 with t = 3^-(k+1) lambda/2; real for lambda in R+ or iR+."""
    t = 3.0 ** (-(k + 1)) * _check_lambda(lam) / 2
    return float(cmath.cosh(t).real)


def _ctilde(w: float) -> np.ndarray:
    first = [1, 4 * w ** 2 - 2, 16 * w ** 4 - 16 * w ** 2 + 3, 4 * w ** 2 - 2, 1]
    e = 16 * w ** 4 + 16 * w ** 3 + 3
    mid = -64 * w ** 6 - 64 * w ** 5 + 32 * w ** 4 + 32 * w ** 3 - 12 * w ** 2 - 12 * w - 6
    return _pmul(first, [e, mid, e])


def _dtilde(w: float) -> np.ndarray:
    return _pmul(_Z2Z1, [1, 2 * w, 4 * w ** 2 - 1, 2 * w, w])


def _normalized(poly, m_s: float, name: str) -> Mask:
    poly = np.asarray(poly, dtype=float)
    return Mask(poly * (m_s / poly.sum()), name=name)


def example4_c(k: int, lam) -> Mask:
    w = ternary_w(k, lam)
    return _normalized(_pmul(_ppow(_Z2Z1, 2), [1, 1], _ctilde(w)), 3.0, f"c[{k}]")


def example4_d(k: int, lam) -> Mask:
    w = ternary_w(k, lam)
    return _normalized(_pmul(_ppow(_Z2Z1, 2), [1, 1], _dtilde(w)), 3.0, f"d[{k}]")


def example4_ternary(lam=1.0) -> MaskSequence:
    """Alternating ternary scheme: c^(k) on even levels, d^(k) on odd levels, a_*(1) = 3."""
    lam = _check_lambda(lam)

    def level(k):
        return example4_c(k, lam) if k % 2 == 0 else example4_d(k, lam)

    return MaskSequence(FormulaTail(level, label="ternary"),
                        limit_points=[ternary_dubuc_deslaurier_dual(), ternary_limit_d()],
                        name=f"example4_ternary({lam:g})", N=11)


def example5_perturbed_chaikin() -> MaskSequence:
    def level(k):
        r, e = 1 / k, 2.0 ** (-2 * k)
        return Mask([0.25 - r, 0.75 - r + e, 0.75 + r, 0.25 + r + e], name=f"example5[{k}]")

    return MaskSequence(FormulaTail(level, label="perturbed chaikin"), limit_points=[chaikin()],
                        name="example5_perturbed_chaikin")


def example6_matrix(k: int, printed: bool = False) -> np.ndarray:
    """16 a^(k) as a 5x5 array, entry [i, j] = 16 a^(k)(i, j).

    The displayed coefficient list has 2^-k in two entries of its fourth row;
    ``printed=False`` uses 2^-2k there, the reading that reproduces the stated
    delta_k = 6 * 2^-(2k+4).
    """
    r, e = 1 / k, 2.0 ** (-2 * k)
    b = 2.0 ** (-k) if printed else e
    return np.array([
        [0, e, 1 + r, 2 - r, 1 - r],
        [-r, 2 - r + e, 6 + r + e, 6 + r + e, 2 + e],
        [1 - r, 6 + r, 10 + 2 * r, 6 + r, 1 - r],
        [2 + b, 6 + r + e, 6 + r + e, 2 - r + b, -r],
        [1 - r, 2 - r, 1 + r, e, 0],
    ])


def example6_perturbed_loop(printed: bool = False) -> MaskSequence:
    def level(k):
        return Mask(example6_matrix(k, printed) / 16, name=f"example6[{k}]")

    tag = "printed" if printed else "corrected"
    return MaskSequence(FormulaTail(level, label="perturbed loop"), limit_points=[loop()],
                        name=f"example6_perturbed_loop({tag})", N=4)


# ---------------------------------------------------------------------------
# registry


def _stationary(name, mask, d, known=None, params=None):
    return SchemeDescriptor(name, mask.s, d, "stationary", MaskSequence.stationary(mask, name), known or {},
                            params or {})


def _resolve_mask(spec) -> Mask:
    if isinstance(spec, Mask):
        return spec
    if isinstance(spec, str):
        desc = builtin(spec)
        if desc.kind != "stationary":
            raise ConfigError(f"{spec!r} is not a stationary mask")
        return desc.mask
    raise ConfigError(f"cannot interpret {spec!r} as a mask")


_B1, _B2, _T3 = DilationSpec.isotropic(2, 1), DilationSpec.isotropic(2, 2), DilationSpec.isotropic(3, 1)


def _build(name: str, params: dict) -> SchemeDescriptor:
    p = dict(params)
    if name == "chaikin":
        return _stationary(name, chaikin(), _B1, {"alpha": 2.0, "rho_V1": 0.25, "sum_rule_order": 3})
    if name == "hat":
        return _stationary(name, hat(), _B1, {"alpha": 1.0})
    if name == "quadratic_bspline":
        return _stationary(name, quadratic_bspline(), _B1, {"alpha": 2.0})
    if name == "cubic_bspline":
        return _stationary(name, cubic_bspline(), _B1, {"alpha": 3.0, "sum_rule_order": 4})
    if name == "fourpoint":
        w = float(p.pop("w", 1 / 16))
        return _stationary(name, fourpoint(w), _B1, {"sum_rule_order": 4} if w == 1 / 16 else {}, {"w": w})
    if name == "butterfly":
        w = float(p.pop("w", 1 / 16))
        return _stationary(name, butterfly(w), _B2, {"rho_V1": 0.25} if w == 1 / 16 else {}, {"w": w})
    if name == "loop":
        return _stationary(name, loop(), _B2, {"rho_V1": 0.25, "alpha": 2.0})
    if name == "courant_box_spline":
        return _stationary(name, courant_box_spline(), _B2, {"alpha": 1.0})
    if name == "daubechies":
        n = int(p.pop("n", 2))
        table = {2: 0.5500, 3: 1.0878, 4: 1.6179, 5: 1.9690, 6: 2.1891, 7: 2.4604, 8: 2.7608, 9: 3.0736,
                 10: 3.3614}
        return _stationary(name, daubechies_mask(n), _B1, {"alpha": table.get(n)}, {"n": n})
    if name == "ternary_dubuc_deslaurier_dual":
        return _stationary(name, ternary_dubuc_deslaurier_dual(), _T3)
    if name == "ternary_limit_d":
        return _stationary(name, ternary_limit_d(), _T3)
    if name == "example1_scaled":
        a = _resolve_mask(p.pop("a", "chaikin"))
        return SchemeDescriptor(name, a.s, _B1 if a.s == 1 else _B2, "formula", example1_scaled(a),
                                {"mu_k": "2/k", "delta_k": 0, "approximate_sum_rules": "violated"})
    if name == "example2_convex":
        a = _resolve_mask(p.pop("a")) if "a" in p else None
        b = _resolve_mask(p.pop("b")) if "b" in p else None
        if b is not None and a is None:
            b = shift_mask(b, (2, 2), N=6) if b.N < 6 else b
        seq = example2_convex(a, b)
        return SchemeDescriptor(name, seq.s, _B2 if seq.s == 2 else _B1, "convex", seq,
                                {"convergence": "C0", "alpha": 2.0, "rho_V1": 0.25})
    if name == "example3_alternating":
        a = _resolve_mask(p.pop("a", "cubic_bspline"))
        c = _resolve_mask(p.pop("c", "fourpoint"))
        rule = p.pop("rule", "even")
        seq = example3_alternating(a, c, rule)
        known = {"rho_V1": 0.35385, "alpha_lower": 1.49876} if a.name == "cubic_bspline" else {}
        if a.name == "quadratic_bspline":
            known = {"rho_V1": 0.35045, "alpha_lower": 1.51271}
        return SchemeDescriptor(name, 1, _B1, "alternating", seq, known, {"rule": rule if isinstance(rule, str)
                                                                         else "custom"})
    if name == "example4_ternary":
        lam = p.pop("lambda", p.pop("lam", 1.0))
        seq = example4_ternary(lam)
        return SchemeDescriptor(name, 1, _T3, "alternating", seq, {"rho_V2": 0.04958, "alpha_lower": 2.73437},
                                {"lambda": str(complex(lam))})
    if name in ("example5", "example5_perturbed_chaikin"):
        return SchemeDescriptor("example5_perturbed_chaikin", 1, _B1, "formula", example5_perturbed_chaikin(),
                                {"mu_k": "2^(-2k+1)", "delta_k": "2^(-2k+1)", "alpha": 2.0, "rho_V1": 0.25})
    if name in ("example6", "example6_perturbed_loop"):
        printed = bool(p.pop("printed", False))
        return SchemeDescriptor("example6_perturbed_loop", 2, _B2, "formula", example6_perturbed_loop(printed),
                                {"mu_k": "5*2^-(2k+4)", "delta_k": "6*2^-(2k+4)", "alpha": 2.0, "rho_V1": 0.25},
                                {"printed": printed})
    raise UnknownSchemeError(f"unknown scheme {name!r}; known: {', '.join(BUILTINS)}")


BUILTINS = (
    "chaikin", "hat", "quadratic_bspline", "cubic_bspline", "fourpoint", "butterfly", "loop", "courant_box_spline",
    "daubechies", "ternary_dubuc_deslaurier_dual", "ternary_limit_d", "example1_scaled", "example2_convex",
    "example3_alternating", "example4_ternary", "example5_perturbed_chaikin", "example6_perturbed_loop",
)

_PARAMS = {
    "fourpoint": {"w"}, "butterfly": {"w"}, "daubechies": {"n"}, "example1_scaled": {"a"},
    "example2_convex": {"a", "b"}, "example3_alternating": {"a", "c", "rule"},
    "example4_ternary": {"lambda", "lam"}, "example6_perturbed_loop": {"printed"}, "example6": {"printed"},
}


def builtin(name: str, params: dict | None = None, **kw) -> SchemeDescriptor:
    """Scheme descriptor by name; parameters via ``params`` or keywords."""
    params = {**(params or {}), **kw}
    extra = set(params) - _PARAMS.get(name, set())
    if extra and name in BUILTINS + ("example5", "example6"):
        raise ConfigError(f"unexpected parameters for {name!r}: {sorted(extra)}")
    return _build(name, params)


# ---------------------------------------------------------------------------
# displayed matrix fixtures

_F = Fraction


def _fr(rows, scale=_F(1)):
    return [[_F(x) * scale for x in row] for row in rows]


_EX3 = {
    "T1": _fr([[_F(1, 8), _F(1, 8), 0, 0], [_F(-1, 16), _F(3, 8), _F(-1, 16), 0], [0, _F(1, 8), _F(3, 8), 0],
               [0, _F(-1, 16), _F(3, 8), _F(-1, 16)]]),
    "T2": _fr([[_F(-1, 16), _F(3, 8), _F(-1, 16), 0], [0, _F(1, 8), _F(3, 8), 0], [0, _F(-1, 16), _F(3, 8), _F(-1, 16)],
               [0, 0, _F(1, 8), _F(1, 8)]]),
    "T3": _fr([[_F(1, 8), 0, 0, 0], [_F(1, 8), _F(1, 4), _F(1, 8), 0], [0, 0, _F(1, 8), _F(1, 4)], [0, 0, 0, 0]]),
    "T4": _fr([[_F(1, 4), _F(1, 8), 0, 0], [0, _F(1, 8), _F(1, 4), _F(1, 8)], [0, 0, 0, _F(1, 8)], [0, 0, 0, 0]]),
    "T5": _fr([[_F(1, 4), 0, 0, 0], [0, _F(1, 4), _F(1, 4), 0], [0, 0, 0, _F(1, 4)], [0, 0, 0, 0]]),
    "T6": _fr([[_F(1, 4), _F(1, 4), 0, 0], [0, 0, _F(1, 4), _F(1, 4)], [0, 0, 0, 0], [0, 0, 0, 0]]),
}


def _ex3_corrected():
    # the 3/8 in row 3 of T1 and row 2 of T2 read 1/8 in the consistent transcription
    out = {k: [row[:] for row in v] for k, v in _EX3.items()}
    out["T1"][2][2] = _F(1, 8)
    out["T2"][1][2] = _F(1, 8)
    return out


_EX4 = {
    "T1": _fr([[35, 0, 0], [-83, -83, -24], [0, 35, -24]], _F(1, 1296)),
    "T2": _fr([[-24, 35, 0], [-24, -83, -83], [0, 0, 35]], _F(1, 1296)),
    "T3": _fr([[-83, -24, 35], [35, -24, -83], [0, 0, 0]], _F(1, 1296)),
    "T4": _fr([[1, 0, 0], [5, 5, 3], [0, 1, 3]], _F(1, 162)),
    "T5": _fr([[3, 1, 0], [3, 5, 5], [0, 0, 0]], _F(1, 162)),
    "T6": _fr([[5, 3, 1], [1, 3, 5], [0, 0, 0]], _F(1, 162)),
}

FIXTURES = ("example3_cubic", "example3_quadratic", "example4", "example3_cubic_corrected",
            "example3_quadratic_corrected")


def matrix_fixture_exact(name: str) -> tuple[list, list[str]]:
    """Rational entries and labels of a displayed matrix set."""
    if name.startswith("example3"):
        src = _ex3_corrected() if name.endswith("_corrected") else _EX3
        base = name.removesuffix("_corrected")
        if base == "example3_cubic":
            labels = ["T1", "T2", "T3", "T4"]
        elif base == "example3_quadratic":
            labels = ["T1", "T2", "T5", "T6"]
        else:
            raise UnknownSchemeError(f"unknown fixture {name!r}")
        return [src[l] for l in labels], labels
    if name == "example4":
        labels = [f"T{i}" for i in range(1, 7)]
        return [_EX4[l] for l in labels], labels
    raise UnknownSchemeError(f"unknown fixture {name!r}; known: {', '.join(FIXTURES)}")


def matrix_fixture(name: str) -> MatrixSet:
    """Displayed restricted transition matrices as a MatrixSet.

    ``example4`` holds the restrictions themselves, i.e. the displayed
    T_1..T_3 divided by 1296 and T_4..T_6 including their 1/162 factor.
    """
    mats, labels = matrix_fixture_exact(name)
    return MatrixSet([np.array([[float(x) for x in row] for row in A]) for A in mats], labels)


def all_stationary() -> list[SchemeDescriptor]:
    out = []
    for name in BUILTINS:
        if name == "daubechies":
            out.extend(builtin(name, n=n) for n in range(2, 11))
            continue
        d = builtin(name)
        if d.kind == "stationary":
            out.append(d)
    return out

