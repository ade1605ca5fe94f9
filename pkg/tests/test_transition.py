import itertools

import numpy as np
import pytest

from subdivreg.errors import DegenerateSubspaceError, ParseError, PreconditionError, SupportMismatchError
from subdivreg.lattice import DilationSpec, compute_index_set, coset_representatives
from subdivreg.schemes import builtin, chaikin, cubic_bspline, hat, loop
from subdivreg.symbolcalc import Mask
from subdivreg.transition import (block_decompose, build_transition, difference_subspace, dump_matrices,
                                  parse_matrices, polynomial_samples, restrict, transformation_basis)

B1 = DilationSpec.isotropic(2, 1)
B2 = DilationSpec.isotropic(2, 2)


def brute_transition(mask, d, K):
    """Entry-by-entry oracle for T_eps[alpha, beta] = a(eps + M alpha - beta)."""
    coeffs = {tuple(int(v) for v in a): mask.coeffs[tuple(a)] for a in np.ndindex(mask.coeffs.shape)}
    out = []
    for eps in coset_representatives(d).reps:
        T = np.zeros((len(K), len(K)))
        for i, al in enumerate(K.points):
            for j, be in enumerate(K.points):
                g = tuple(int(v) for v in np.array(eps) + d.matrix @ np.array(al) - np.array(be))
                T[i, j] = coeffs.get(g, 0.0)
        out.append(T)
    return out


@pytest.mark.parametrize("mask,d", [(chaikin(), B1), (cubic_bspline(), B1), (hat(), B1),
                                    (loop(), B2), (Mask(np.arange(1.0, 7.0)), DilationSpec.isotropic(3, 1))])
def test_transition_matches_bruteforce(mask, d):
    K = compute_index_set(d, mask.N)
    fam = build_transition(mask, d, K)
    for T, R in zip(fam, brute_transition(mask, d, K)):
        assert np.array_equal(T, R)


def test_general_dilation_bruteforce():
    d = DilationSpec(((1, 1), (1, -1)))
    mask = Mask(np.array([[0.5, 0.25], [0.25, 0.0]]) * 2)
    K = compute_index_set(d, mask.N)
    for T, R in zip(build_transition(mask, d, K), brute_transition(mask, d, K)):
        assert np.array_equal(T, R)


def test_chaikin_entry():
    K = compute_index_set(B1, 3)
    fam = build_transition(chaikin(), B1, K)
    i = K.points.index((0,))
    assert fam[0][i, i] == 0.25


def test_hat_column_sums():
    K = compute_index_set(B1, 2)
    for T in build_transition(hat(), B1, K):
        # interior columns see the whole coset sum, which is 1
        sums = T.sum(axis=0)
        assert np.allclose(sums[1:-1], 1.0)


def test_support_mismatch():
    K = compute_index_set(B1, 2)
    with pytest.raises(SupportMismatchError):
        build_transition(cubic_bspline(), B1, K)
    with pytest.raises(SupportMismatchError):
        build_transition(loop(), B1, K)


def test_difference_subspace_dims():
    K = compute_index_set(B1, 3)
    assert len(K) == 7
    assert difference_subspace(K, 0).dim == 6
    assert difference_subspace(K, 1).dim == 5
    K2 = compute_index_set(B2, 4)
    assert len(K2) - difference_subspace(K2, 1).dim == 3


def test_difference_subspace_orthogonal_to_polynomials():
    K = compute_index_set(B2, 3)
    V = difference_subspace(K, 2)
    P, _ = polynomial_samples(K, 2)
    assert np.abs(P.T @ V.basis).max() < 1e-9 * np.abs(P).max()
    assert np.allclose(V.basis.T @ V.basis, np.eye(V.dim), atol=1e-12)


def test_difference_subspace_degenerate():
    K = compute_index_set(B1, 1)
    with pytest.raises(DegenerateSubspaceError):
        difference_subspace(K, len(K) - 1)


@pytest.mark.parametrize("mask,order", [(hat(), 2), (chaikin(), 3), (cubic_bspline(), 4)])
def test_invariance_follows_sum_rules(mask, order):
    K = compute_index_set(B1, mask.N)
    fam = build_transition(mask, B1, K)
    for ell in range(order):
        assert restrict(fam, difference_subspace(K, ell)).invariant
    if order < len(K) - 1:
        assert not restrict(fam, difference_subspace(K, order)).invariant


def test_loop_invariance():
    K = compute_index_set(B2, loop().N)
    fam = build_transition(loop(), B2, K)
    assert restrict(fam, difference_subspace(K, 1)).invariant


def test_transformation_basis_blocks():
    K = compute_index_set(B1, 3)
    b = transformation_basis([chaikin()], B1, K, 2)
    assert b.blocks == [1, 1, 1, 4]
    for T in build_transition(chaikin(), B1, K):
        split = block_decompose(T, b)
        assert np.abs(split.delta).max() < 1e-12
        X = split.transformed
        off = b.offsets
        for j, B in enumerate(b.fixed_diagonal()):
            assert np.allclose(X[off[j]:off[j + 1], off[j]:off[j + 1]], B, atol=1e-12)
        assert np.allclose(b.inverse(split.transformed), T, atol=1e-12)


def test_transformation_basis_2d():
    K = compute_index_set(B2, 4)
    b = transformation_basis([loop()], B2, K, 1)
    assert b.blocks[:2] == [1, 2]
    for T in build_transition(loop(), B2, K):
        assert np.abs(block_decompose(T, b).delta).max() < 1e-10


def test_transformation_basis_requires_sum_rules():
    K = compute_index_set(B1, 2)
    with pytest.raises(PreconditionError):
        transformation_basis([hat()], B1, K, 2)
    with pytest.raises(PreconditionError):
        transformation_basis([hat()], DilationSpec(((1, 1), (1, -1))), K, 0)


def test_example5_remainder_tracks_delta():
    d = builtin("example5")
    K = compute_index_set(B1, 3)
    b = transformation_basis([chaikin()], B1, K, 1)
    ratios = []
    for k in range(2, 16):
        for T in build_transition(d.sequence.mask(k), B1, K):
            ratios.append(np.abs(block_decompose(T, b).delta).max() / 2.0 ** (-2 * k + 1))
    assert max(ratios) < 10
    assert np.ptp(ratios[-6:]) < 1.0


def test_dump_round_trip():
    rng = np.random.default_rng(2)
    mats = [rng.normal(size=(3, 3)), rng.normal(size=(3, 3)) * 1e-20]
    text = dump_matrices(mats, ["A", "B"])
    back, names = parse_matrices(text)
    assert names == ["A", "B"]
    for x, y in zip(mats, back):
        assert np.array_equal(x, y)


def test_parse_errors():
    with pytest.raises(ParseError):
        parse_matrices("matrix A 2 2\n1 2\n3\n")
    with pytest.raises(ParseError):
        parse_matrices("1 2 3\n")


def test_transition_is_deterministic():
    K = compute_index_set(B2, 4)
    a = build_transition(loop(), B2, K)
    b = build_transition(loop(), B2, K)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert list(itertools.chain(a.reps)) == list(coset_representatives(B2).reps)
