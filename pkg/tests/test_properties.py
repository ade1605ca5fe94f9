"""Property suite: invariance, block structure, JSR covariance, derivatives, subdivision oracle."""
import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from subdivreg.cascade import delta_data, subdivide
from subdivreg.jsr import jsr
from subdivreg.lattice import DilationSpec, compute_index_set
from subdivreg.schemes import BUILTINS, all_stationary, builtin
from subdivreg.symbolcalc import Mask, sum_rule_order, symbol_derivative, symbol_eval
from subdivreg.transition import (block_decompose, build_transition, difference_subspace, restrict,
                                  transformation_basis)


def _sum_rule_masks():
    seen, out = set(), []
    for name in BUILTINS:
        descs = [builtin(name, n=n) for n in range(2, 11)] if name == "daubechies" else [builtin(name)]
        for d in descs:
            for a in d.limit_points:
                key = (a.coeffs.tobytes(), a.coeffs.shape)
                if key in seen or sum_rule_order(a, d.dilation) < 1:
                    continue
                seen.add(key)
                out.append(pytest.param(a, d.dilation, id=f"{d.name}{d.params.get('n', '')}:{a.name}"))
    return out


@pytest.mark.parametrize("mask,d", _sum_rule_masks())
def test_v0_invariance(mask, d):
    K = compute_index_set(d, mask.N)
    r = restrict(build_transition(mask, d, K), difference_subspace(K, 0))
    assert max(r.residuals) <= 1e-12


@pytest.mark.parametrize("desc", [pytest.param(d, id=f"{d.name}{d.params.get('n', '')}") for d in all_stationary()])
def test_block_structure(desc):
    a, d = desc.mask, desc.dilation
    ell = min(sum_rule_order(a, d) - 1, 2)
    if ell < 0:
        pytest.skip("no sum rules")
    K = compute_index_set(d, a.N)
    basis = transformation_basis([a], d, K, ell)
    off = basis.offsets
    for T in build_transition(a, d, K):
        split = block_decompose(T, basis)
        X = split.transformed
        # zero above the diagonal blocks, B_j = m^-(j-1) I on them
        for j, B in enumerate(basis.fixed_diagonal()):
            assert np.abs(X[off[j]:off[j + 1], off[j]:off[j + 1]] - B).max() <= 1e-12
            assert np.abs(X[off[j]:off[j + 1], off[j + 1]:]).max() <= 1e-12


_mats = arrays(np.float64, (2, 3, 3), elements=st.floats(-2, 2, allow_nan=False, width=64))


@settings(max_examples=15)
@given(_mats, st.floats(0.1, 10))
def test_jsr_scaling_covariance(mats, c):
    a = jsr(list(mats), certify=False, budget=2000, tree_depth=6, max_len=8)
    b = jsr(list(c * mats), certify=False, budget=2000, tree_depth=6, max_len=8)
    assert b.lower == pytest.approx(c * a.lower, rel=1e-9, abs=1e-12)
    assert b.upper == pytest.approx(c * a.upper, rel=1e-6, abs=1e-12)


@settings(max_examples=15)
@given(arrays(np.float64, (2, 2, 2), elements=st.floats(-1, 1, allow_nan=False, width=64)),
       arrays(np.float64, (2, 1, 1), elements=st.floats(-1, 1, allow_nan=False, width=64)),
       arrays(np.float64, (2, 2, 1), elements=st.floats(-5, 5, allow_nan=False, width=64)))
def test_jsr_block_triangular_max(top, bottom, coupling):
    mats = []
    for A, B, C in zip(top, bottom, coupling):
        X = np.zeros((3, 3))
        X[:2, :2], X[2:, 2:], X[:2, 2:] = A, B, C
        mats.append(X)
    kw = dict(certify=False, budget=3000, tree_depth=8, max_len=8)
    whole = jsr(mats, **kw)
    r_top = jsr(list(top), **kw)
    r_bot = max(abs(float(b)) for b in bottom.ravel())
    assert whole.lower == pytest.approx(max(r_top.lower, r_bot), rel=1e-9, abs=1e-12)
    assert whole.upper <= max(r_top.upper, r_bot) * (1 + 1e-9) + 1e-12


@given(arrays(np.float64, st.integers(2, 8), elements=st.floats(-3, 3, allow_nan=False, width=64)),
       st.complex_numbers(min_magnitude=0.5, max_magnitude=1.5), st.integers(1, 3))
def test_symbol_derivative_vs_finite_difference(coeffs, z, order):
    assume(np.any(coeffs))
    a = Mask(coeffs)
    h = 1e-3

    def f(w):
        return symbol_derivative(a, (order - 1,), w) if order > 1 else symbol_eval(a, w)

    # five-point central stencil for the next derivative
    fd = (-f(z + 2 * h) + 8 * f(z + h) - 8 * f(z - h) + f(z - 2 * h)) / (12 * h)
    ex = symbol_derivative(a, (order,), z)
    j = np.arange(len(coeffs), dtype=float)
    size = float(np.sum(np.abs(coeffs) * j ** order * abs(z) ** np.maximum(j - order, 0)))
    assert abs(fd - ex) <= 1e-6 * max(abs(ex), size, float(np.abs(coeffs).sum()))


def brute_refine(c: dict, coeffs: np.ndarray, M: np.ndarray) -> dict:
    out: dict = {}
    for beta, v in c.items():
        for g in np.ndindex(coeffs.shape):
            alpha = tuple(int(x) for x in np.array(g) + M @ np.array(beta))
            out[alpha] = out.get(alpha, 0.0) + coeffs[g] * v
    return out


@pytest.mark.parametrize("trial", range(10))
def test_subdivide_random_masks(trial):
    rng = np.random.default_rng(100 + trial)
    s = 1 + trial % 2
    m = 2 + trial % 3 if s == 1 else 2
    d = DilationSpec.isotropic(m, s) if trial != 9 else DilationSpec(((1, 1), (1, -1)))
    mask = Mask(rng.normal(size=(int(rng.integers(2, 5)),) * d.s))
    data, ref = delta_data(d), {(0,) * d.s: 1.0}
    for _ in range(3):
        data = subdivide(data, mask, d)
        ref = brute_refine(ref, mask.coeffs, d.matrix)
    got = {tuple(int(i) for i in idx): v for idx, v in zip(data.indices(), data.values.ravel())}
    for k in set(got) | set(ref):
        assert abs(got.get(k, 0.0) - ref.get(k, 0.0)) <= 1e-13 * max(1.0, abs(ref.get(k, 0.0)))
