"""Joint spectral radius: s.m.p. search, product-tree bounds and invariant polytopes.

A word ``(i1, ..., ip)`` denotes the product ``A[i1] @ A[i2] @ ... @ A[ip]``.
"""
from __future__ import annotations

import itertools
import logging
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.optimize import linprog
from scipy.sparse.csgraph import connected_components

log = logging.getLogger(__name__)


def spectral_radius(A) -> float:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"spectral radius needs a square matrix, got shape {A.shape}")
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def _leading(A: np.ndarray):
    """Leading eigenvalue, its eigenvector and a type tag."""
    w, V = np.linalg.eig(A)
    i = int(np.argmax(np.abs(w)))
    lam = w[i]
    r = abs(lam)
    tol = 1e-9 * max(r, 1e-300)
    if abs(lam.imag) > tol:
        kind = "complex"
    elif lam.real > 0:
        kind = "real-positive"
    else:
        kind = "real-negative"
    return lam, V[:, i], kind


class MatrixSet:
    """Nonempty finite family of n x n real matrices."""

    def __init__(self, matrices: Sequence, labels: Sequence[str] | None = None):
        mats = [np.array(A, dtype=float) for A in matrices]
        if not mats:
            raise ValueError("matrix set must be nonempty")
        n = mats[0].shape[0] if mats[0].ndim == 2 else -1
        for A in mats:
            if A.ndim != 2 or A.shape != (n, n):
                raise ValueError("all matrices must be square with a common dimension")
            if not np.all(np.isfinite(A)):
                raise ValueError("matrix entries must be finite")
            A.setflags(write=False)
        self.matrices = tuple(mats)
        self.labels = tuple(labels) if labels is not None else tuple(f"T{i + 1}" for i in range(len(mats)))
        if len(self.labels) != len(mats):
            raise ValueError("one label per matrix")

    @property
    def n(self) -> int:
        return self.matrices[0].shape[0]

    def __len__(self):
        return len(self.matrices)

    def __getitem__(self, i):
        return self.matrices[i]

    def __iter__(self):
        return iter(self.matrices)

    def product(self, word) -> np.ndarray:
        P = np.eye(self.n)
        for i in word:
            P = P @ self.matrices[i]
        return P

    def scaled(self, c: float) -> "MatrixSet":
        return MatrixSet([c * A for A in self.matrices], self.labels)

    def similar(self, S: np.ndarray) -> "MatrixSet":
        Si = np.linalg.inv(S)
        return MatrixSet([Si @ A @ S for A in self.matrices], self.labels)

    def word_label(self, word) -> str:
        return "".join(self.labels[i] for i in word)


# ---------------------------------------------------------------------------
# words


def canonical_rotation(word) -> tuple:
    """Lexicographically smallest cyclic rotation."""
    w = tuple(word)
    if not w:
        return w
    return min(w[i:] + w[:i] for i in range(len(w)))


def primitive_root(word) -> tuple:
    w = tuple(word)
    p = len(w)
    for q in range(1, p + 1):
        if p % q == 0 and w[:q] * (p // q) == w:
            return w[:q]
    return w


def canonical_word(word) -> tuple:
    return canonical_rotation(primitive_root(word))


def compress_word(word, labels=None) -> str:
    """Readable form such as ``T1(T1T3)^13`` for a word."""
    w = tuple(word)
    lab = labels or [f"T{i + 1}" for i in range(max(w, default=0) + 1)]
    best = None
    p = len(w)
    for a in range(0, min(p, 4)):
        for q in range(1, (p - a) // 2 + 1):
            if (p - a) % q:
                continue
            body = w[a:a + q]
            if body * ((p - a) // q) == w[a:]:
                k = (p - a) // q
                if k > 1 and (best is None or len(body) + a < best[0]):
                    best = (len(body) + a, a, body, k)
    if best is None:
        return "".join(lab[i] for i in w)
    _, a, body, k = best
    head = "".join(lab[i] for i in w[:a])
    inner = "".join(lab[i] for i in body)
    inner = inner if len(body) == 1 else f"({inner})"
    return f"{head}{inner}^{k}"


@dataclass
class SmpCandidate:
    word: tuple
    value: float  # rho(P)^(1/p)
    eig_type: str

    @classmethod
    def from_word(cls, ms: MatrixSet, word) -> "SmpCandidate":
        word = tuple(int(i) for i in word)
        P = ms.product(word)
        lam, _, kind = _leading(P)
        return cls(word, float(abs(lam)) ** (1.0 / len(word)), kind)

    def as_dict(self, labels=None):
        return {"word": list(self.word), "label": compress_word(self.word, labels), "value": self.value,
                "eig_type": self.eig_type}


@dataclass
class JsrResult:
    lower: float
    upper: float
    candidate: SmpCandidate | None
    status: str  # certified-exact | bounded | budget-exhausted
    stats: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    def as_dict(self, labels=None):
        return {
            "lower": self.lower,
            "upper": self.upper,
            "status": self.status,
            "candidate": self.candidate.as_dict(labels) if self.candidate else None,
            "stats": self.stats,
        }


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("SUBDIVREG_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# candidate search


def _rho_root(P: np.ndarray, p: int) -> float:
    r = spectral_radius(P)
    return r ** (1.0 / p) if r > 0 else 0.0


def search_candidates(ms: MatrixSet, max_len: int = 30, exhaustive_nodes: int = 40000, keep: int = 12) -> list[SmpCandidate]:
    """Rank s.m.p. candidates among short words and structured words u v^k.

    All primitive necklaces are tried up to the depth that fits in
    ``exhaustive_nodes`` products; longer words of the form u v^k (u, v
    short) are then tried up to ``max_len``.
    """
    q = len(ms)
    depth = 1
    while depth < max_len and sum(q ** t for t in range(1, depth + 2)) <= exhaustive_nodes:
        depth += 1
    scores: dict[tuple, float] = {}

    def visit(word, P):
        if canonical_word(word) == word:
            scores[word] = _rho_root(P, len(word))

    stack = [((i,), ms[i]) for i in reversed(range(q))]
    while stack:
        word, P = stack.pop()
        visit(word, P)
        if len(word) < depth:
            for i in reversed(range(q)):
                stack.append((word + (i,), P @ ms[i]))

    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], len(kv[0]), kv[0]))
    bodies = [w for w, _ in ranked[:keep]]
    heads = [()] + [w for t in range(1, min(depth, 3) + 1) for w in itertools.product(range(q), repeat=t)]
    for v in bodies:
        Pv = ms.product(v)
        for u in heads:
            Pu = ms.product(u) if u else np.eye(ms.n)
            P = Pu
            for k in range(1, (max_len - len(u)) // len(v) + 1):
                P = P @ Pv
                word = canonical_word(u + v * k)
                if word in scores or len(u) + k * len(v) <= depth:
                    continue
                scores[word] = _rho_root(P, len(u) + k * len(v))
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], len(kv[0]), kv[0]))
    out = []
    for w, _ in ranked[:keep]:
        out.append(SmpCandidate.from_word(ms, w))
    return out


# ---------------------------------------------------------------------------
# product tree


def _balancing(ms: MatrixSet) -> np.ndarray:
    S = sum(np.abs(A) for A in ms)
    if not np.any(S):
        return np.ones(ms.n)
    with warnings.catch_warnings():
        # scipy casts an unused permutation array, which warns for some inputs
        warnings.simplefilter("ignore", RuntimeWarning)
        _, (scale, _) = scipy.linalg.matrix_balance(S, permute=False, separate=True)
    return scale


def product_tree_bounds(ms: MatrixSet, max_depth: int = 12, budget: int = 200000, lower: float = 0.0,
                        tol: float = 1e-9, norm_ord=2, workers: int | None = None) -> JsrResult:
    """Branch-and-bound over the product tree in a diagonally balanced norm.

    A node whose normalized norm ||P||^(1/t) is at most the running lower
    bound times (1 + tol) is closed. At every depth the closed nodes plus the
    open frontier form a complete prefix code, which bounds the JSR by the
    maximum normalized norm over that code; the best such bound is kept.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    t0 = time.perf_counter()
    q, n = len(ms), ms.n
    d = _balancing(ms)
    mats = [A * d[None, :] / d[:, None] for A in ms]  # D^-1 A D
    workers = workers or _workers()

    def nrm(P):
        return float(np.linalg.norm(P, norm_ord))

    best_word, best_lower = None, lower
    for i, A in enumerate(mats):
        r = spectral_radius(A)
        if r > best_lower:
            best_lower, best_word = r, (i,)
    closed_max = 0.0
    frontier = [((i,), A) for i, A in enumerate(mats)]
    upper = np.inf
    explored = 0
    status = "bounded"
    depth_reached = 0
    for t in range(1, max_depth + 1):
        depth_reached = t
        # evaluate nodes at depth t
        def score(item):
            word, P = item
            return nrm(P) ** (1.0 / t), _rho_root(P, t)

        if workers > 1 and len(frontier) > 256:
            with ThreadPoolExecutor(workers) as ex:
                vals = list(ex.map(score, frontier, chunksize=64))
        else:
            vals = [score(it) for it in frontier]
        explored += len(frontier)
        for (word, _), (_, rr) in zip(frontier, vals):
            if rr > best_lower * (1 + 1e-13):
                best_lower, best_word = rr, word
        thresh = best_lower * (1 + tol)
        open_nodes, open_max = [], 0.0
        for item, (nv, _) in zip(frontier, vals):
            if nv <= thresh:
                closed_max = max(closed_max, nv)
            else:
                open_nodes.append(item)
                open_max = max(open_max, nv)
        upper = min(upper, max(closed_max, open_max, best_lower))
        if not open_nodes:
            break
        if t == max_depth:
            break
        if explored + len(open_nodes) * q > budget:
            status = "budget-exhausted"
            break
        frontier = [(w + (i,), P @ mats[i]) for w, P in open_nodes for i in range(q)]
    cand = SmpCandidate.from_word(ms, best_word) if best_word else None
    lower_out = cand.value if cand else best_lower
    return JsrResult(min(lower_out, upper), max(upper, lower_out), cand, status,
                     {"nodes": explored, "depth": depth_reached, "seconds": time.perf_counter() - t0})


# ---------------------------------------------------------------------------
# invariant polytope


class _Polytope:
    """Symmetric absolutely convex hull of a vertex list; gauge by linear programming."""

    def __init__(self, n: int, lp_tol: float = 1e-10):
        self.n = n
        self.V = np.zeros((n, 0))
        self.lp_tol = lp_tol

    def add(self, v):
        self.V = np.column_stack([self.V, v])

    def gauge(self, w) -> float:
        """min sum|t| subject to V t = w; inf if w is outside span V."""
        k = self.V.shape[1]
        w = np.asarray(w, dtype=float)
        if k == 0:
            return np.inf if np.any(w) else 0.0
        scale = np.linalg.norm(w)
        if scale == 0:
            return 0.0
        w = w / scale
        c = np.ones(2 * k)
        A = np.hstack([self.V, -self.V])
        # tight tolerances first; HiGHS sometimes gives up on them for ill-conditioned hulls
        for tol in (self.lp_tol, 10 * self.lp_tol, 100 * self.lp_tol):
            opts = {"primal_feasibility_tolerance": tol, "dual_feasibility_tolerance": tol}
            for method in ("highs-ds", "highs-ipm"):
                res = linprog(c, A_eq=A, b_eq=w, bounds=(0, None), method=method, options=opts)
                if res.status == 0:
                    return float(res.fun) * scale
                if res.status == 2:
                    return np.inf
        # solver trouble: any feasible point still gives an upper estimate of the gauge
        t, *_ = np.linalg.lstsq(self.V, w, rcond=None)
        if np.linalg.norm(self.V @ t - w) > 1e-9:
            return np.inf
        return float(np.abs(t).sum()) * scale


@dataclass
class _Vertex:
    vec: np.ndarray
    root: int
    word: tuple  # applied word: vec = prod(word) @ root vector


def polytope_certify(ms: MatrixSet, candidate: SmpCandidate, max_iters: int = 400, max_vertices: int = 4000,
                     margin: float = 1e-8, lp_tol: float = 1e-10, time_limit: float | None = None) -> JsrResult:
    """Try to prove that ``candidate`` is spectrum maximizing via an invariant polytope.

    The family is scaled by 1/rho_hat. Starting from the leading eigenvector
    of the candidate product and its cyclic images, images under every
    matrix are added as vertices until the symmetric hull is invariant
    (certified) or a budget runs out (bounded, with the polytope-norm upper
    bound). When a vertex reveals a product that beats the candidate, the
    result carries that product as the new candidate with status
    ``bounded`` and ``stats['improved'] = True``.
    """
    t0 = time.perf_counter()
    word = tuple(candidate.word)
    p = len(word)
    rho_hat = candidate.value
    n = ms.n
    if rho_hat <= 0:
        return JsrResult(0.0, np.inf, candidate, "bounded", {"reason": "zero candidate"})
    A = [M / rho_hat for M in ms]
    P = np.eye(n)
    for i in word:
        P = P @ A[i]
    lam, v0, kind = _leading(P)
    if kind == "complex":
        return JsrResult(rho_hat, np.inf, candidate, "bounded", {"reason": "complex leading eigenvalue"})
    v0 = np.real(v0)
    v0 = v0 / np.abs(v0).max()
    # cyclic images: v_{j+1} = A[i_{p-j}] v_j is a leading eigenvector of a rotated product
    roots = [v0]
    root_words = [word]
    for j in range(p - 1):
        i = word[p - 1 - j]
        v = A[i] @ roots[-1]
        roots.append(v)
        root_words.append(word[p - 1 - j:] + word[:p - 1 - j])
    poly = _Polytope(n, lp_tol)
    verts: list[_Vertex] = []
    for r, v in enumerate(roots):
        if np.linalg.norm(v) == 0:
            continue
        if poly.gauge(v) > 1 + margin:
            poly.add(v)
            verts.append(_Vertex(v, r, ()))
    new = list(verts)
    lp_calls = 0
    it = 0
    scale0 = max(np.abs(v).max() for v in roots)
    improved = None
    status = "bounded"
    while new:
        it += 1
        if it > max_iters or len(verts) > max_vertices or (time_limit and time.perf_counter() - t0 > time_limit):
            break
        nxt = []
        for vt in new:
            if time_limit and time.perf_counter() - t0 > time_limit:
                break
            for i, Ai in enumerate(A):
                w = Ai @ vt.vec
                if not np.any(np.abs(w) > 1e-14 * scale0):
                    continue
                lp_calls += 1
                g = poly.gauge(w)
                if g <= 1 + margin:
                    continue
                wword = (i,) + vt.word
                # does this vertex expose a product beating the candidate?
                cyc = wword + root_words[vt.root]
                for trial in (wword, cyc):
                    val = _rho_root(_prod(A, trial), len(trial))
                    if val > 1 + 1e-9:
                        cw = canonical_word(trial)
                        if improved is None or val > improved[1]:
                            improved = (cw, val)
                if improved is not None:
                    break
                nv = _Vertex(w, vt.root, wword)
                poly.add(w)
                verts.append(nv)
                nxt.append(nv)
            if improved is not None:
                break
        if improved is not None:
            break
        new = nxt
    else:
        status = "certified-exact"
    stats = {"vertices": len(verts), "iterations": it, "lp_calls": lp_calls, "seconds": time.perf_counter() - t0}
    if improved is not None:
        better = SmpCandidate.from_word(ms, improved[0])
        stats["improved"] = True
        return JsrResult(better.value, np.inf, better, "bounded", stats)
    # polytope-norm bound: max over vertices and matrices of the gauge of the image
    gmax = 0.0
    for vt in verts:
        if time_limit and time.perf_counter() - t0 > 2 * time_limit:
            gmax = np.inf  # no time left for the norm bound
            break
        for Ai in A:
            w = Ai @ vt.vec
            if np.any(w):
                gmax = max(gmax, poly.gauge(w))
                lp_calls += 1
    stats["lp_calls"] = lp_calls
    upper = rho_hat * max(gmax, 1.0) if np.isfinite(gmax) else np.inf
    if status == "certified-exact" and not np.isfinite(upper):
        status = "bounded"
    return JsrResult(rho_hat, max(upper, rho_hat), candidate, status, stats)


def _prod(A, word):
    P = np.eye(A[0].shape[0])
    for i in word:
        P = P @ A[i]
    return P


# ---------------------------------------------------------------------------
# orchestration


def irreducible_blocks(ms: MatrixSet, tol: float = 0.0) -> list[np.ndarray]:
    """Index sets of the diagonal blocks of a common block-triangular form.

    Uses the strongly connected components of the joint sparsity graph;
    the JSR is the maximum over the blocks.
    """
    pattern = sum((np.abs(A) > tol).astype(int) for A in ms)
    ncomp, labels = connected_components(pattern, directed=True, connection="strong")
    blocks = []
    for c in range(ncomp):
        idx = np.nonzero(labels == c)[0]
        if len(idx) == 1 and all(A[idx[0], idx[0]] == 0 for A in ms):
            continue  # nilpotent 1x1 block
        blocks.append(idx)
    return blocks


def _jsr_block(ms: MatrixSet, target_gap: float, budget: int, max_len: int, tree_depth: int,
               certify: bool, max_vertices: int, time_limit: float | None,
               threshold: float | None = None, ceiling: float | None = None) -> JsrResult:
    stats: dict = {"restarts": 0}
    t0 = time.perf_counter()
    cands = search_candidates(ms, max_len=max_len)
    best = cands[0]
    tree = product_tree_bounds(ms, max_depth=tree_depth, budget=budget, lower=best.value)
    stats["tree"] = tree.stats
    lower, upper = max(best.value, tree.lower), tree.upper
    if tree.candidate and tree.candidate.value > best.value:
        best = tree.candidate
        cands.insert(0, best)
    status = "bounded" if tree.status != "budget-exhausted" else "budget-exhausted"
    if upper - lower <= target_gap * 1e-3:
        return JsrResult(lower, upper, best, "certified-exact", stats)
    if threshold is not None and upper <= threshold:
        stats["below_threshold"] = True
        return JsrResult(lower, upper, best, status, stats)
    if ceiling is not None and lower >= ceiling:
        stats["above_ceiling"] = True
        return JsrResult(lower, upper, best, status, stats)
    if certify:
        tried = set()
        queue = [c for c in cands if c.eig_type != "complex"]
        while queue and stats["restarts"] < 6:
            if time_limit and time.perf_counter() - t0 > 3 * time_limit:
                break
            cand = queue.pop(0)
            if cand.word in tried or cand.value < lower * (1 - 1e-12):
                continue
            tried.add(cand.word)
            res = polytope_certify(ms, cand, max_vertices=max_vertices, time_limit=time_limit)
            stats.setdefault("polytope", []).append({"word": list(cand.word), **res.stats, "status": res.status})
            if res.lower > lower:
                lower, best = res.lower, res.candidate
            upper = min(upper, res.upper)
            if res.status == "certified-exact":
                return JsrResult(lower, max(upper, lower), best, "certified-exact", stats)
            if res.stats.get("improved"):
                stats["restarts"] += 1
                if res.candidate.eig_type != "complex":
                    queue.insert(0, res.candidate)
                continue
            break
    if upper - lower <= target_gap:
        status = "bounded"
    return JsrResult(lower, max(upper, lower), best, status, stats)


def jsr(ms: MatrixSet | Sequence, target_gap: float = 1e-6, budget: int = 200000, max_len: int = 30,
        tree_depth: int = 10, certify: bool = True, max_vertices: int = 4000,
        time_limit: float | None = None, split: bool = True, threshold: float | None = None,
        ceiling: float | None = None) -> JsrResult:
    """JSR bounds: candidate search, product-tree upper bound, polytope certification.

    With ``threshold`` set, a block stops refining once its upper bound is at
    most the threshold (used when only rho <= threshold matters), and once its
    lower bound reaches ``ceiling`` (used when rho >= ceiling settles the question).
    """
    if not isinstance(ms, MatrixSet):
        ms = MatrixSet(ms)
    t0 = time.perf_counter()
    if all(not np.any(A) for A in ms):
        return JsrResult(0.0, 0.0, SmpCandidate((0,), 0.0, "real-positive"), "certified-exact", {"zero": True})
    blocks = irreducible_blocks(ms) if split else [np.arange(ms.n)]
    if not blocks:  # jointly nilpotent in triangular form
        return JsrResult(0.0, 0.0, SmpCandidate((0,), 0.0, "real-positive"), "certified-exact",
                         {"nilpotent": True})
    results = []
    for idx in blocks:
        sub = MatrixSet([A[np.ix_(idx, idx)] for A in ms], ms.labels)
        results.append((idx, _jsr_block(sub, target_gap, budget, max_len, tree_depth, certify, max_vertices,
                                        time_limit, threshold, ceiling)))
    lower = max(r.lower for _, r in results)
    upper = max(r.upper for _, r in results)
    top = max(results, key=lambda ir: ir[1].lower)[1]
    cand = SmpCandidate.from_word(ms, top.candidate.word) if top.candidate else None
    if cand is not None:
        lower = max(lower, cand.value)
    dominant_ok = all(r.status == "certified-exact" or r.upper <= lower for _, r in results)
    if dominant_ok and upper - lower <= max(target_gap, 1e-12 * max(upper, 1e-300)):
        status = "certified-exact"
    elif any(r.status == "budget-exhausted" for _, r in results):
        status = "budget-exhausted"
    else:
        status = "bounded"
    stats = {"blocks": [len(i) for i, _ in results], "seconds": time.perf_counter() - t0,
             "block_stats": [r.stats for _, r in results]}
    return JsrResult(lower, max(upper, lower), cand, status, stats)
