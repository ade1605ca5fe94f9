"""Transition matrices T_eps = [a(eps + M alpha - beta)], difference subspaces and block forms."""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import DegenerateSubspaceError, ParseError, PreconditionError, SupportMismatchError
from .lattice import DilationSpec, IndexSetK, coset_representatives
from .symbolcalc import Mask, multi_indices, sum_rule_order


@dataclass(frozen=True)
class TransitionFamily:
    """One |K| x |K| matrix per coset representative, ordered like ``reps``."""

    matrices: tuple
    reps: tuple
    K: IndexSetK
    source: str = ""

    def __len__(self):
        return len(self.matrices)

    def __iter__(self):
        return iter(self.matrices)

    def __getitem__(self, i):
        return self.matrices[i]


def build_transition(mask: Mask, d: DilationSpec, K: IndexSetK) -> TransitionFamily:
    """Matrices T_eps[alpha, beta] = a(eps + M alpha - beta) for alpha, beta in K."""
    if mask.s != d.s:
        raise SupportMismatchError(f"mask dimension {mask.s} differs from dilation dimension {d.s}")
    supp = mask.support
    top = max(max(a) for a in supp)
    if top > K.support_bound:
        raise SupportMismatchError(f"mask support reaches {top}, beyond the index set bound N = {K.support_bound}")
    M = d.matrix
    A = K.array
    N = mask.N
    reps = coset_representatives(d).reps
    mats = []
    for eps in reps:
        idx = np.asarray(eps)[None, None, :] + (A @ M.T)[:, None, :] - A[None, :, :]
        ok = np.all((idx >= 0) & (idx <= N), axis=2)
        T = np.zeros((len(K), len(K)))
        r, c = np.nonzero(ok)
        if len(r):
            T[r, c] = mask.coeffs[tuple(idx[r, c].T)]
        T.setflags(write=False)
        mats.append(T)
    return TransitionFamily(tuple(mats), tuple(reps), K, mask.name)


def _monomial_columns(A: np.ndarray, degree: int) -> tuple[np.ndarray, list]:
    s = A.shape[1]
    cols, etas = [], []
    for j in range(degree + 1):
        for eta in multi_indices(s, j):
            cols.append(np.prod(A ** np.array(eta, dtype=float), axis=1))
            etas.append(eta)
    return np.column_stack(cols), etas


def polynomial_samples(K: IndexSetK, degree: int) -> tuple[np.ndarray, list]:
    """Columns [alpha^eta]_{alpha in K} for |eta| <= degree, graded lexicographic."""
    return _monomial_columns(K.array.astype(float), degree)


@dataclass(frozen=True)
class DifferenceSubspace:
    ell: int
    basis: np.ndarray  # orthonormal columns
    K: IndexSetK

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def degree(self) -> int:
        return self.ell


def _centred_samples(K: IndexSetK, degree: int) -> np.ndarray:
    # shifting and scaling the grid keeps the same polynomial span, better conditioned
    A = K.array.astype(float)
    c = A.mean(axis=0)
    w = np.maximum(np.abs(A - c).max(axis=0), 1.0)
    return _monomial_columns((A - c) / w, degree)[0]


def difference_subspace(K: IndexSetK, ell: int) -> DifferenceSubspace:
    """Orthonormal basis of V_ell, the complement of degree <= ell polynomial samples."""
    if ell < 0:
        raise ValueError("ell must be >= 0")
    P = _centred_samples(K, ell)
    n = len(K)
    Q, R, _ = scipy.linalg.qr(P, mode="full", pivoting=True)
    diag = np.abs(np.diag(R)) if R.size else np.zeros(0)
    rank = int(np.sum(diag > 1e-10 * max(diag.max(initial=0.0), 1.0)))
    if rank >= n:
        raise DegenerateSubspaceError(f"|K| = {n} is too small: polynomials of degree {ell} fill R^|K|")
    V = Q[:, rank:]
    # fix signs so the basis is reproducible
    signs = np.sign(V[np.argmax(np.abs(V), axis=0), np.arange(V.shape[1])])
    V = V * signs
    V.setflags(write=False)
    return DifferenceSubspace(ell, V, K)


@dataclass
class Restriction:
    matrices: list
    residuals: list
    tolerances: list

    @property
    def invariant(self) -> bool:
        return all(r <= t for r, t in zip(self.residuals, self.tolerances))


def restrict(fam: TransitionFamily | Sequence[np.ndarray], V: DifferenceSubspace, tol: float | None = None) -> Restriction:
    """X_eps = V^T T_eps V with the invariance residual ||T V - V X||_1."""
    B = V.basis
    mats, res, tols = [], [], []
    for T in fam:
        X = B.T @ T @ B
        r = float(np.linalg.norm(T @ B - B @ X, 1)) if B.size else 0.0
        t = tol if tol is not None else 1e-9 * max(np.linalg.norm(T, 1), 1e-300)
        mats.append(X)
        res.append(r)
        tols.append(t)
    return Restriction(mats, res, tols)


# ---------------------------------------------------------------------------
# transformation basis


@dataclass
class TransformedFamily:
    """Change of basis W = [e_1 | v_{j,eta} | basis of V_ell] and its block sizes."""

    W: np.ndarray
    Winv: np.ndarray
    blocks: list  # sizes 1, d_2, ..., d_{ell+1}, dim V_ell
    m: int
    ell: int
    K: IndexSetK

    def transform(self, T: np.ndarray) -> np.ndarray:
        return self.Winv @ T @ self.W

    def inverse(self, X: np.ndarray) -> np.ndarray:
        return self.W @ X @ self.Winv

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.blocks)])

    def fixed_diagonal(self) -> list:
        """Blocks B_1 = (1), B_{j+1} = m^{-j} I of size d_{j+1}."""
        return [np.eye(b) * float(self.m) ** (-j) for j, b in enumerate(self.blocks[:-1])]


def transformation_basis(limit_masks: Sequence[Mask], d: DilationSpec, K: IndexSetK, ell: int,
                         check: bool = True) -> TransformedFamily:
    """Basis in which stationary sum-rule transition matrices are block-lower triangular."""
    if not d.is_isotropic:
        raise PreconditionError("the transformation basis needs M = mI")
    if check:
        for a in limit_masks:
            if sum_rule_order(a, d, max_ell=ell) < ell + 1:
                raise PreconditionError(f"limit mask {a.name or a!r} lacks sum rules of order {ell + 1}")
    n = len(K)
    P, etas = polynomial_samples(K, ell)
    cols = [np.eye(n)[:, 0]]
    blocks = [1]
    for j in range(ell):
        # v_{j,eta} in V_j with <alpha^eta', v> = delta_{eta, eta'} for |eta'| = j+1
        C, ce = polynomial_samples(K, j + 1)
        if np.linalg.matrix_rank(C) < C.shape[1]:
            raise DegenerateSubspaceError(f"polynomial samples of degree {j + 1} are rank deficient on K")
        top = [i for i, e in enumerate(ce) if sum(e) == j + 1]
        pinv = np.linalg.pinv(C.T)
        for i in top:
            rhs = np.zeros(C.shape[1])
            rhs[i] = 1.0
            cols.append(pinv @ rhs)
        blocks.append(len(top))
    V = difference_subspace(K, ell).basis
    cols.extend(V.T)
    blocks.append(V.shape[1])
    W = np.column_stack(cols)
    if W.shape != (n, n) or np.linalg.matrix_rank(W) < n:
        raise DegenerateSubspaceError("transformation basis is singular on this K")
    return TransformedFamily(W, np.linalg.inv(W), blocks, d.m, ell, K)


@dataclass
class BlockSplit:
    lower: np.ndarray  # block-lower part with fixed diagonal blocks B_j
    delta: np.ndarray  # remainder, block-upper rows
    Q: np.ndarray
    c: list  # c_{j,eps}: row block j, column blocks j.. of delta
    transformed: np.ndarray


def block_decompose(level_matrix: np.ndarray, basis: TransformedFamily) -> BlockSplit:
    X = basis.transform(level_matrix)
    off = basis.offsets
    nb = len(basis.blocks)
    lower = np.zeros_like(X)
    for bi in range(nb):
        r0, r1 = off[bi], off[bi + 1]
        lower[r0:r1, :off[bi]] = X[r0:r1, :off[bi]]
    for bi, B in enumerate(basis.fixed_diagonal()):
        lower[off[bi]:off[bi + 1], off[bi]:off[bi + 1]] = B
    q0 = off[-2]
    lower[q0:, q0:] = X[q0:, q0:]
    delta = X - lower
    cs = [delta[off[bi]:off[bi + 1], off[bi]:] for bi in range(nb - 1)]
    return BlockSplit(lower, delta, X[q0:, q0:].copy(), cs, X)


# ---------------------------------------------------------------------------
# matrix dump format


def dump_matrices(mats: Sequence[np.ndarray], names: Sequence[str] | None = None) -> str:
    """``matrix <name> <rows> <cols>`` header, then one row per line, 17 significant digits."""
    out = io.StringIO()
    for i, A in enumerate(mats):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        name = names[i] if names else f"T{i + 1}"
        if any(ch.isspace() for ch in name) or not name:
            raise ValueError(f"invalid matrix name {name!r}")
        out.write(f"matrix {name} {A.shape[0]} {A.shape[1]}\n")
        for row in A:
            out.write(" ".join(f"{x:.17g}" for x in row) + "\n")
    return out.getvalue()


def parse_matrices(text: str) -> tuple[list[np.ndarray], list[str]]:
    """Inverse of :func:`dump_matrices`; '#' starts a comment."""
    mats, names = [], []
    cur = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] == "matrix":
            if cur is not None and len(cur[3]) < cur[1] * cur[2]:
                raise ParseError(f"matrix {cur[0]!r} has {len(cur[3])} of {cur[1] * cur[2]} entries", lineno)
            if len(tok) != 4:
                raise ParseError("expected 'matrix <name> <rows> <cols>'", lineno)
            try:
                r, c = int(tok[2]), int(tok[3])
            except ValueError:
                raise ParseError("matrix dimensions must be integers", lineno) from None
            if r < 1 or c < 1:
                raise ParseError("matrix dimensions must be positive", lineno)
            if cur is not None:
                mats.append(np.array(cur[3]).reshape(cur[1], cur[2]))
                names.append(cur[0])
            cur = (tok[1], r, c, [])
            continue
        if cur is None:
            raise ParseError("entries before the first 'matrix' header", lineno)
        try:
            vals = [float(t) for t in tok]
        except ValueError as exc:
            raise ParseError(f"bad number: {exc}", lineno) from None
        if len(cur[3]) + len(vals) > cur[1] * cur[2]:
            raise ParseError(f"too many entries for matrix {cur[0]!r}", lineno)
        cur[3].extend(vals)
    if cur is None:
        raise ParseError("no matrices found", None)
    if len(cur[3]) != cur[1] * cur[2]:
        raise ParseError(f"matrix {cur[0]!r} has {len(cur[3])} of {cur[1] * cur[2]} entries", None)
    mats.append(np.array(cur[3]).reshape(cur[1], cur[2]))
    names.append(cur[0])
    return mats, names
