import itertools
import math

import numpy as np
import pytest

from subdivreg.jsr import (MatrixSet, canonical_rotation, canonical_word, compress_word, irreducible_blocks, jsr,
                           primitive_root, product_tree_bounds, search_candidates, spectral_radius)


def brute_bounds(mats, L):
    """Oracle: max rho(P)^(1/L) and max ||P||_2^(1/L) over all words of length L."""
    lo = hi = 0.0
    for w in itertools.product(range(len(mats)), repeat=L):
        P = np.eye(mats[0].shape[0])
        for i in w:
            P = P @ mats[i]
        lo = max(lo, float(np.max(np.abs(np.linalg.eigvals(P)))) ** (1 / L))
        hi = max(hi, float(np.linalg.norm(P, 2)) ** (1 / L))
    return lo, hi


def test_spectral_radius():
    assert spectral_radius([[0, 1], [-1, 0]]) == pytest.approx(1)
    assert spectral_radius(np.diag([0.5, -3])) == pytest.approx(3)
    assert spectral_radius(np.zeros((0, 0))) == 0.0
    with pytest.raises(ValueError):
        spectral_radius(np.ones((2, 3)))


def test_single_matrix_is_spectral_radius():
    rng = np.random.default_rng(5)
    for _ in range(5):
        A = rng.normal(size=(4, 4))
        r = jsr([A], time_limit=10)
        rho = float(np.max(np.abs(np.linalg.eigvals(A))))
        assert r.lower <= rho + 1e-9
        assert r.lower >= rho * (1 - 1e-9)
        assert r.upper >= rho * (1 - 1e-12)


def test_diagonal_pair():
    r = jsr([np.diag([0.5, 0.9]), np.diag([0.7, -0.2])])
    assert r.status == "certified-exact"
    assert r.lower == pytest.approx(0.9) and r.upper == pytest.approx(0.9, abs=1e-6)


def test_zero_and_nilpotent():
    r = jsr([np.zeros((3, 3)), np.zeros((3, 3))])
    assert (r.lower, r.upper, r.status) == (0.0, 0.0, "certified-exact")
    N = np.triu(np.ones((3, 3)), 1)
    r = jsr([N, 2 * N])
    assert r.upper == 0.0


def test_golden_pair():
    A = np.array([[1.0, 1.0], [0.0, 1.0]])
    B = A.T
    r = jsr([A, B], time_limit=20)
    phi = (1 + math.sqrt(5)) / 2
    assert r.lower == pytest.approx(phi, rel=1e-12)
    assert r.upper == pytest.approx(phi, rel=1e-6)
    assert r.status == "certified-exact"
    assert canonical_word(r.candidate.word) == (0, 1)


def test_against_bruteforce_words():
    rng = np.random.default_rng(11)
    for _ in range(4):
        mats = [rng.normal(size=(3, 3)) for _ in range(2)]
        r = jsr(mats, time_limit=10)
        lo, hi = brute_bounds(mats, 8)
        assert r.lower >= lo * (1 - 1e-9)
        assert r.upper <= hi * (1 + 1e-9) or r.upper <= brute_bounds(mats, 4)[1] * (1 + 1e-9)
        assert r.lower <= r.upper


def test_scaling_covariance():
    rng = np.random.default_rng(7)
    mats = [rng.normal(size=(3, 3)) for _ in range(2)]
    a = jsr(mats, time_limit=10)
    b = jsr([3.0 * A for A in mats], time_limit=10)
    assert b.lower == pytest.approx(3 * a.lower, rel=1e-9)


def test_similarity_invariance():
    rng = np.random.default_rng(8)
    ms = MatrixSet([rng.normal(size=(3, 3)) for _ in range(2)])
    S = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    a, b = jsr(ms, time_limit=10), jsr(ms.similar(S), time_limit=10)
    assert a.lower == pytest.approx(b.lower, rel=1e-8)


def test_block_triangular_max():
    A1, B1 = np.array([[0.3, 0.1], [0.0, 0.2]]), np.array([[0.25, 0.0], [0.05, 0.1]])
    A2, B2 = np.array([[0.9]]), np.array([[-0.5]])
    X = np.zeros((3, 3))
    Y = np.zeros((3, 3))
    X[:2, :2], X[2:, 2:], X[:2, 2:] = A1, A2, 1.0
    Y[:2, :2], Y[2:, 2:], Y[:2, 2:] = B1, B2, -2.0
    r = jsr([X, Y])
    assert r.lower == pytest.approx(0.9) and r.upper == pytest.approx(0.9, abs=1e-6)
    assert sorted(len(b) for b in irreducible_blocks(MatrixSet([X, Y]))) == [1, 2]


def test_candidate_search_finds_product():
    A = np.array([[1.0, 1.0], [0.0, 1.0]])
    c = search_candidates(MatrixSet([A, A.T]), max_len=6)
    assert c[0].value == pytest.approx((1 + math.sqrt(5)) / 2)


def test_product_tree_bounds_bracket():
    rng = np.random.default_rng(3)
    ms = MatrixSet([rng.normal(size=(3, 3)) for _ in range(3)])
    t = product_tree_bounds(ms, max_depth=6, budget=5000)
    lo, _ = brute_bounds(list(ms), 4)
    assert t.upper >= lo - 1e-12


def test_matrix_set_validation():
    with pytest.raises(ValueError):
        MatrixSet([])
    with pytest.raises(ValueError):
        MatrixSet([np.eye(2), np.eye(3)])
    with pytest.raises(ValueError):
        MatrixSet([np.array([[np.nan]])])


def test_words():
    assert canonical_rotation((1, 0, 2)) == (0, 2, 1)
    assert primitive_root((0, 1, 0, 1)) == (0, 1)
    assert canonical_word((1, 0, 1, 0)) == (0, 1)
    assert compress_word((0,) + (0, 2) * 13) == "T1(T1T3)^13"
    assert compress_word((0, 0, 1)) in ("T1T1T2", "T1^2T2", "(T1)^2T2")


def test_threshold_and_ceiling_stop_early():
    rng = np.random.default_rng(4)
    mats = [rng.normal(size=(5, 5)) for _ in range(3)]
    full = jsr(mats, time_limit=10)
    low = jsr(mats, threshold=10 * full.upper, time_limit=10)
    assert low.upper <= 10 * full.upper
    high = jsr(mats, ceiling=0.5 * full.lower, time_limit=10)
    assert high.lower >= 0.5 * full.lower
