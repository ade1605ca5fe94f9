"""Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned.

Run under pytest (lines appear in the terminal summary) or directly with
``python tests/test_acceptance.py``.  Set SUBDIVREG_EXTENDED=1 to include
the Daubechies rows n = 5..10.
"""
import math
import os
import sys
import time
import warnings

import numpy as np
import pytest

from subdivreg.cascade import (basic_limit_samples, bspline_closed_form, delta_data, fourier_product,
                               refinability_residual, subdivide)
from subdivreg.errors import NormalizationRefused
from subdivreg.jsr import MatrixSet, canonical_word, compress_word, jsr
from subdivreg.lattice import DilationSpec, compute_index_set
from subdivreg.regularity import analyze, exact_holder, limit_rho, necessary_decay_check
from subdivreg.schemes import BUILTINS, all_stationary, builtin, chaikin, loop, matrix_fixture
from subdivreg.symbolcalc import (Mask, MaskSequence, approximate_sum_rule_verdict, defect_sequence,
                                  normalize_sequence, sum_rule_order, symbol_derivative)
from subdivreg.transition import (block_decompose, build_transition, difference_subspace, restrict,
                                  transformation_basis)

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # direct run without the tests directory on the path
    ACCEPTANCE_LINES = {}

EXTENDED = os.environ.get("SUBDIVREG_EXTENDED", "") not in ("", "0")
B1 = DilationSpec.isotropic(2, 1)

# pinned tolerances
FIXTURE_TOL = 1e-3
EX4_ALPHA_TOL = 1e-2
CHAIKIN_RHO_TOL = 1e-9
DEFECT_TOL = 1e-12
LOOP_RHO_TOL = 1e-6
ALPHA2_TOL = 1e-6
DAUB_TOL = {2: 5e-3, 3: 5e-3, 4: 1e-2}
DAUB_TABLE = {2: 0.5500, 3: 1.0878, 4: 1.6179, 5: 1.9690, 6: 2.1891, 7: 2.4604, 8: 2.7608, 9: 3.0736, 10: 3.3614}
ROW_SECONDS = 300.0
FIXTURE_SECONDS = 60.0
CASCADE_TOL = 1e-3
RESIDUAL_TOL = 1e-2


def record(key, ok: bool, text: str):
    ACCEPTANCE_LINES[str(key)] = f"[{'PASS' if ok else 'FAIL'}] {key:<8} {text}"
    return ok


def info(key, text: str):
    ACCEPTANCE_LINES[str(key)] = f"[INFO] {key:<8} {text}"


def _same_cycle(word, target) -> bool:
    return canonical_word(word) == canonical_word(target)


def _fixture_run(name):
    ms = matrix_fixture(name)
    t = time.perf_counter()
    r = jsr(ms, target_gap=FIXTURE_TOL)
    return ms, r, time.perf_counter() - t


def _example3(key, name, rho, word, alpha):
    ms, r, sec = _fixture_run(name)
    a = -math.log2(r.upper)
    contains = r.lower - FIXTURE_TOL <= rho <= r.upper + FIXTURE_TOL and r.gap <= FIXTURE_TOL
    ok = contains and _same_cycle(r.candidate.word, word) and sec < FIXTURE_SECONDS and abs(a - alpha) <= FIXTURE_TOL
    text = (f"{name}: jsr in [{r.lower:.6f}, {r.upper:.6f}] (target {rho} +- {FIXTURE_TOL}), candidate "
            f"{compress_word(r.candidate.word, list(ms.labels))}, alpha >= {a:.5f} (target {alpha}), {sec:.1f} s")
    return ok, text


def test_criterion_1_example3_cubic():
    word = (0,) + (0, 2) * 13
    ok, text = _example3(1, "example3_cubic", 0.35385, word, 1.49876)
    record(1, ok, text)
    # the consistent transcription of the same matrices, for comparison
    _, text_c = _example3("1.info", "example3_cubic_corrected", 0.35385, word, 1.49876)
    info("1.info", text_c)
    assert ok, text


def test_criterion_2_example3_quadratic():
    word = (0,) + (0, 2) * 2
    ok, text = _example3(2, "example3_quadratic", 0.35045, word, 1.51271)
    record(2, ok, text)
    _, text_c = _example3("2.info", "example3_quadratic_corrected", 0.35045, word, 1.51271)
    info("2.info", text_c)
    assert ok, text


def test_criterion_3_example4():
    ms, r, sec = _fixture_run("example4")
    a = -math.log(r.upper) / math.log(3)
    ok = (abs(r.lower - 0.04958) <= FIXTURE_TOL and abs(r.upper - 0.04958) <= FIXTURE_TOL
          and _same_cycle(r.candidate.word, (0, 2)) and a >= 2.734 - EX4_ALPHA_TOL)
    text = (f"example4: jsr in [{r.lower:.8f}, {r.upper:.8f}], candidate "
            f"{compress_word(r.candidate.word, list(ms.labels))} ({r.candidate.eig_type}), "
            f"alpha >= {a:.6f}, {sec:.1f} s")
    record(3, ok, text)
    assert ok, text


def test_criterion_4_chaikin_and_example5():
    a = chaikin()
    K = compute_index_set(B1, a.N)
    fam = build_transition(a, B1, K)
    V = difference_subspace(K, 1)
    res = restrict(fam, V)
    r = jsr(res.matrices)
    rho_ok = res.invariant and abs(r.lower - 0.25) <= CHAIKIN_RHO_TOL and abs(r.upper - 0.25) <= CHAIKIN_RHO_TOL
    d = builtin("example5")
    rep = analyze(d.sequence, d.dilation)
    ds = defect_sequence(d.sequence, d.dilation, 1, 40)
    err = float(np.max(np.abs(ds.delta - 2.0 ** (-2 * ds.levels + 1))))
    ex_ok = (rep.convergence == "C1-convergent" and rep.holder_exact is not None
             and abs(rep.holder_exact - 2) <= ALPHA2_TOL and abs(rep.holder_lower - 2) <= ALPHA2_TOL
             and err <= DEFECT_TOL)
    ok = rho_ok and ex_ok
    text = (f"chaikin rho(V_1) in [{r.lower:.12g}, {r.upper:.12g}] ({r.status}); example5: {rep.convergence}, "
            f"alpha >= {rep.holder_lower:.10g}, alpha = {rep.holder_exact}, max |delta_k - 2^(-2k+1)| = {err:.1e}")
    record(4, ok, text)
    assert ok, text


def test_criterion_5_example6_and_loop():
    d = builtin("example6")
    ks = np.arange(1, 13)
    ds = defect_sequence(d.sequence, d.dilation, 1, 12)
    mu_err = float(np.max(np.abs(ds.mu - 5 * 2.0 ** (-(2 * ks + 4)))))
    delta_err = float(np.max(np.abs(ds.delta - 6 * 2.0 ** (-(2 * ks + 4)))))
    mu_ratio = float(np.median(ds.mu / 2.0 ** (-(2 * ks + 4))))
    r = limit_rho([loop()], d.dilation, 1)
    rep = analyze(d.sequence, d.dilation, ell=1)
    rho_ok = abs(r.lower - 0.25) <= LOOP_RHO_TOL and abs(r.upper - 0.25) <= LOOP_RHO_TOL
    verdict_ok = rep.convergence == "C1-convergent" and abs(rep.holder_lower - 2) <= ALPHA2_TOL
    ok = mu_err <= DEFECT_TOL and delta_err <= DEFECT_TOL and rho_ok and verdict_ok
    text = (f"example6: max |mu_k - 5*2^-(2k+4)| = {mu_err:.2e} (measured mu_k = {mu_ratio:g}*2^-(2k+4)), "
            f"max |delta_k - 6*2^-(2k+4)| = {delta_err:.1e}; loop rho(V_1) in [{r.lower:.10g}, {r.upper:.10g}]; "
            f"{rep.convergence}, alpha >= {rep.holder_lower:.10g}")
    record(5, ok, text)
    assert ok, text


def _daub_row(n):
    d = builtin("daubechies", n=n)
    t = time.perf_counter()
    ex = exact_holder(d.sequence, d.dilation, time_limit=120.0)
    return ex, time.perf_counter() - t


@pytest.mark.parametrize("n", [2, 3, 4])
def test_criterion_6_daubechies(n):
    ex, sec = _daub_row(n)
    want = DAUB_TABLE[n]
    ok = ex.alpha is not None and abs(ex.alpha - want) <= DAUB_TOL[n] and sec < ROW_SECONDS
    text = f"daubechies n={n}: {ex.status}, alpha = {ex.alpha} (table {want} +- {DAUB_TOL[n]}), {sec:.1f} s"
    record(f"6.n{n:02d}", ok, text)
    assert ok, text


@pytest.mark.skipif(not EXTENDED, reason="set SUBDIVREG_EXTENDED=1 for the rows n = 5..10")
@pytest.mark.parametrize("n", range(5, 11))
def test_criterion_6_daubechies_extended(n):
    ex, sec = _daub_row(n)
    want = DAUB_TABLE[n]
    lo, hi = ex.interval if ex.interval else (-math.inf, math.inf)
    ok = ex.status in ("exact", "edge") and lo - 5e-5 <= want <= hi + 5e-5
    text = f"daubechies n={n}: {ex.status}, alpha in [{lo:.6f}, {hi:.6f}] (table {want}), {sec:.1f} s"
    record(f"6.n{n:02d}", ok, text)
    assert ok, text


def test_criterion_7_example1():
    d = builtin("example1_scaled")
    ds = defect_sequence(d.sequence, d.dilation, 0, 40)
    dv = approximate_sum_rule_verdict(ds)
    mu_ok = np.allclose(ds.mu, 2.0 / ds.levels, rtol=1e-12) and dv.verdict == "violated"
    rep = analyze(d.sequence, d.dilation)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        fp = fourier_product(d.sequence, d.dilation, 0.0)
    refused = False
    try:
        normalize_sequence(d.sequence, d.dilation)
    except NormalizationRefused:
        refused = True
    ok = mu_ok and rep.convergence == "not-established" and fp.divergent and any(
        issubclass(x.category, RuntimeWarning) for x in w) and refused
    text = (f"example1: sum-rule verdict {dv.verdict} (mu_k = 2/k), analysis {rep.convergence}, fourier product "
            f"divergent = {fp.divergent} (partial {fp.partial[-1]:.0f} after {fp.depth} levels), "
            f"normalization refused = {refused}")
    record(7, ok, text)
    assert ok, text


def _prop_a():
    worst = 0.0
    for name in BUILTINS:
        descs = [builtin(name, n=n) for n in range(2, 11)] if name == "daubechies" else [builtin(name)]
        for desc in descs:
            for a in desc.limit_points:
                if sum_rule_order(a, desc.dilation) < 1:
                    continue
                K = compute_index_set(desc.dilation, a.N)
                worst = max(worst, max(restrict(build_transition(a, desc.dilation, K),
                                                difference_subspace(K, 0)).residuals))
    return worst <= 1e-12, f"(a) V_0 residual {worst:.1e}"


def _prop_b():
    worst = 0.0
    for desc in all_stationary():
        a, d = desc.mask, desc.dilation
        ell = min(sum_rule_order(a, d) - 1, 2)
        if ell < 0:
            continue
        K = compute_index_set(d, a.N)
        basis = transformation_basis([a], d, K, ell)
        off = basis.offsets
        for T in build_transition(a, d, K):
            X = block_decompose(T, basis).transformed
            for j, B in enumerate(basis.fixed_diagonal()):
                worst = max(worst, np.abs(X[off[j]:off[j + 1], off[j]:off[j + 1]] - B).max(),
                            np.abs(X[off[j]:off[j + 1], off[j + 1]:]).max(initial=0.0))
    return worst <= 1e-12, f"(b) block deviation {worst:.1e}"


def _prop_c():
    rng = np.random.default_rng(2024)
    ok = True
    kw = dict(certify=False, budget=3000, tree_depth=8, max_len=8)
    for _ in range(5):
        mats = [rng.normal(size=(3, 3)) for _ in range(2)]
        c = float(rng.uniform(0.1, 10))
        a, b = jsr(mats, **kw), jsr([c * A for A in mats], **kw)
        ok &= abs(b.lower - c * a.lower) <= 1e-9 * c * a.lower
        top = [rng.normal(size=(2, 2)) for _ in range(2)]
        bot = rng.normal(size=2)
        full = []
        for A, x in zip(top, bot):
            X = np.zeros((3, 3))
            X[:2, :2], X[2, 2], X[:2, 2] = A, x, rng.normal(size=2) * 3
            full.append(X)
        want = max(jsr(top, **kw).lower, float(np.abs(bot).max()))
        ok &= abs(jsr(full, **kw).lower - want) <= 1e-9 * want
    return ok, "(c) scaling and block max"


def _prop_d():
    rng = np.random.default_rng(7)
    worst = 0.0
    h = 1e-3
    for _ in range(40):
        a = Mask(rng.normal(size=int(rng.integers(2, 9))))
        z = complex(*rng.uniform(-1.2, 1.2, size=2))
        if abs(z) < 0.3:
            continue

        def f(w):
            return symbol_derivative(a, (0,), w)

        fd = (-f(z + 2 * h) + 8 * f(z + h) - 8 * f(z - h) + f(z - 2 * h)) / (12 * h)
        ex = symbol_derivative(a, (1,), z)
        worst = max(worst, abs(fd - ex) / max(abs(ex), float(np.abs(a.coeffs).sum())))
    return worst <= 1e-6, f"(d) derivative rel err {worst:.1e}"


def _prop_e():
    worst = 0.0
    for trial in range(10):
        rng = np.random.default_rng(300 + trial)
        d = [B1, DilationSpec.isotropic(3, 1), DilationSpec.isotropic(2, 2), DilationSpec(((1, 1), (1, -1)))][trial % 4]
        mask = Mask(rng.normal(size=(int(rng.integers(2, 5)),) * d.s))
        data, ref = delta_data(d), {(0,) * d.s: 1.0}
        for _ in range(3):
            data = subdivide(data, mask, d)
            out: dict = {}
            for beta, v in ref.items():
                for g in np.ndindex(mask.coeffs.shape):
                    al = tuple(int(x) for x in np.array(g) + d.matrix @ np.array(beta))
                    out[al] = out.get(al, 0.0) + mask.coeffs[g] * v
            ref = out
        got = {tuple(int(i) for i in idx): v for idx, v in zip(data.indices(), data.values.ravel())}
        for k in set(got) | set(ref):
            worst = max(worst, abs(got.get(k, 0.0) - ref.get(k, 0.0)) / max(1.0, abs(ref.get(k, 0.0))))
    return worst <= 1e-13, f"(e) subdivide vs oracle {worst:.1e}"


def test_criterion_8_properties():
    parts = [_prop_a(), _prop_b(), _prop_c(), _prop_d(), _prop_e()]
    ok = all(p[0] for p in parts)
    text = "; ".join(p[1] for p in parts) + "  (full suite: tests/test_properties.py)"
    record(8, ok, text)
    assert ok, text


def test_criterion_9_cascade():
    seq = MaskSequence.stationary(chaikin())
    data = basic_limit_samples(seq, B1, 10)
    err = float(np.abs(data.values - bspline_closed_form(data.points(centered=True).ravel(), 2)).max())
    plain = float(np.abs(data.values - bspline_closed_form(data.points().ravel(), 2)).max())
    d = builtin("example5")
    resid = refinability_residual(d.sequence, d.dilation, 1, 8)
    ok = err <= CASCADE_TOL and resid < RESIDUAL_TOL
    text = (f"chaikin 10 levels vs quadratic B-spline: sup error {err:.1e} at dyadic points 2^-10 (alpha + 3/2) "
            f"({plain:.1e} at 2^-10 alpha); example5 refinability residual {resid:.1e}")
    record(9, ok, text)
    assert ok, text


def test_criterion_10_necessary_check():
    d = builtin("example5")
    c1 = necessary_decay_check(d.sequence, d.dilation, 1)
    c2 = necessary_decay_check(d.sequence, d.dilation, 2)
    ok = c1.verdict == "consistent" and c2.verdict == "inconsistent"
    text = f"example5: ell=1 {c1.verdict} (ratio {c1.ratio:.4g}), ell=2 {c2.verdict} (ratio {c2.ratio:.4g})"
    record(10, ok, text)
    assert ok, text


def main() -> int:
    tests = [test_criterion_1_example3_cubic, test_criterion_2_example3_quadratic, test_criterion_3_example4,
             test_criterion_4_chaikin_and_example5, test_criterion_5_example6_and_loop]
    tests += [lambda n=n: test_criterion_6_daubechies(n) for n in (2, 3, 4)]
    if EXTENDED:
        tests += [lambda n=n: test_criterion_6_daubechies_extended(n) for n in range(5, 11)]
    tests += [test_criterion_7_example1, test_criterion_8_properties, test_criterion_9_cascade,
              test_criterion_10_necessary_check]
    failed = 0
    for t in tests:
        try:
            t()
        except AssertionError:
            failed += 1
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.split(".")[0]), k)):
        print(ACCEPTANCE_LINES[key])
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
