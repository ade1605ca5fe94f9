"""Convergence verdicts and Hölder bounds for level-dependent subdivision.

Every number in a report carries a provenance tag: ``certified`` when it
follows from exact arithmetic or a certified JSR interval, ``empirical``
when it rests on a finite-horizon fit of the defect sequences.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateSubspaceError,
    MissingLimitPointsError,
    NormalizationRefused,
    PreconditionError,
    UnsupportedError,
)
from .jsr import JsrResult, MatrixSet, jsr
from .lattice import DilationSpec, IndexSetK, compute_index_set, minimal_invariant_set
from .symbolcalc import (
    DefectVerdict,
    Mask,
    MaskSequence,
    approximate_sum_rule_verdict,
    defect_sequence,
    fit_decay,
    normalize_sequence,
    sum_rule_order,
    symmetric_roots_on_circle,
)
from .transition import build_transition, difference_subspace, restrict

log = logging.getLogger(__name__)

CERTIFIED = "certified"
EMPIRICAL = "empirical"


def _logm(x: float, m: int) -> float:
    if x <= 0:
        return -np.inf
    return float(np.log(x) / np.log(m))


# ---------------------------------------------------------------------------
# rho_A = JSR(T_A | V_ell)


@dataclass
class RestrictedFamily:
    """T_{eps,a}|_{V_q} over the limit masks, plus a scalar floor.

    When every mask reproduces polynomials up to degree q > ell, the
    restriction to V_ell is block triangular with scalar blocks m^-j
    (ell < j <= q) above T|_{V_q}; then rho(T|V_ell) = max(floor, JSR(T|V_q))
    with floor = m^-(ell+1).
    """

    matrices: MatrixSet
    ell: int  # requested subspace
    q: int  # subspace actually restricted to
    floor: float
    index_set: IndexSetK
    minimal: bool
    residual: float

    def as_dict(self):
        return {"ell": self.ell, "q": self.q, "floor": self.floor, "index_set_size": len(self.index_set),
                "minimal_index_set": self.minimal, "dim": self.matrices.n, "residual": self.residual}


def common_sum_rule_order(masks: Sequence[Mask], d: DilationSpec, cap: int = 12) -> int:
    return min(sum_rule_order(a, d, max_ell=cap - 1) for a in masks)


def restricted_family(masks: Sequence[Mask], d: DilationSpec, ell: int, minimal: bool = True,
                      reduce: bool = True) -> RestrictedFamily:
    """Restricted transition family of a set of masks, ready for the JSR solver."""
    masks = list(masks)
    if not masks:
        raise MissingLimitPointsError("no limit masks given")
    N = max(a.N for a in masks)
    masks = [a.padded(N) for a in masks]
    if ell > 0 and not d.is_isotropic:
        raise UnsupportedError("V_ell with ell > 0 needs M = mI")
    order = common_sum_rule_order(masks, d, cap=max(ell + 2, 12))
    if order < ell + 1:
        raise PreconditionError(f"limit masks satisfy sum rules of order {order} only; V_{ell} is not invariant")
    top = order - 1 if (reduce and d.is_isotropic) else ell
    K = compute_index_set(d, max(N, 1))
    supp = sorted({p for a in masks for p in a.support})
    candidates = []
    if minimal:
        candidates.append((minimal_invariant_set(d, supp, K), True))
    candidates.append((K, False))
    for S, is_min in candidates:
        fams = [build_transition(a, d, S) for a in masks]
        for q in range(top, ell - 1, -1):
            try:
                V = difference_subspace(S, q)
            except DegenerateSubspaceError:
                continue
            mats, res = [], 0.0
            for fam in fams:
                R = restrict(fam, V)
                if not R.invariant:
                    break
                mats.extend(R.matrices)
                res = max(res, max(R.residuals))
            else:
                floor = float(d.m) ** (-(ell + 1)) if q > ell else 0.0
                labels = [f"T{i + 1}" for i in range(len(mats))]
                return RestrictedFamily(MatrixSet(mats, labels), ell, q, floor, S, is_min, res)
    raise DegenerateSubspaceError(f"no invariant difference subspace V_q with q >= {ell} on the index set")


@dataclass
class RhoBound:
    lower: float
    upper: float
    status: str
    family: RestrictedFamily
    result: JsrResult

    @property
    def certified(self) -> bool:
        return self.status == "certified-exact"

    def as_dict(self):
        cand = self.result.candidate.as_dict(self.family.matrices.labels) if self.result.candidate else None
        floor_active = bool(self.family.floor > 0 and self.family.floor >= self.result.upper)
        return {"lower": self.lower, "upper": self.upper, "status": self.status, "candidate": cand,
                "floor_active": floor_active, "family": self.family.as_dict()}


def limit_rho(masks: Sequence[Mask], d: DilationSpec, ell: int, minimal: bool = True, reduce: bool = True,
              **jsr_kw) -> RhoBound:
    """Bounds on rho(T_A|V_ell) for the limit set A."""
    fam = restricted_family(masks, d, ell, minimal=minimal, reduce=reduce)
    if fam.matrices.n == 0:
        res = JsrResult(0.0, 0.0, None, "certified-exact")
    else:
        kw = dict(jsr_kw)
        kw.setdefault("time_limit", 30.0)
        if fam.floor > 0:
            kw.setdefault("threshold", fam.floor)
        res = jsr(fam.matrices, **kw)
    lo, hi = max(res.lower, fam.floor), max(res.upper, fam.floor)
    status = res.status
    if fam.floor > 0 and res.upper <= fam.floor:
        status = "certified-exact"  # the floor is an exact eigenvalue
        lo = hi = fam.floor
    return RhoBound(lo, hi, status, fam, res)


# ---------------------------------------------------------------------------
# verdicts


@dataclass
class ConvergenceResult:
    verdict: str  # C0-convergent | not-established
    defects: DefectVerdict
    rho: RhoBound | None
    reasons: list = field(default_factory=list)

    def as_dict(self):
        return {"verdict": self.verdict, "defects": self.defects.as_dict(),
                "rho_V0": self.rho.as_dict() if self.rho else None, "reasons": list(self.reasons)}


def _limits(seq: MaskSequence) -> list[Mask]:
    if not seq.limit_points:
        raise MissingLimitPointsError(f"sequence {seq.name!r} declares no limit points")
    return list(seq.limit_points)


def convergence_check(seq: MaskSequence, d: DilationSpec, horizon: int = 40, **jsr_kw) -> ConvergenceResult:
    """C0 convergence from approximate sum rules of order 1 and rho(T_A|V_0) < 1.

    The conditions are sufficient only, so a failure reads ``not-established``.
    """
    limits = _limits(seq)
    ds = defect_sequence(seq, d, 0, horizon)
    dv = approximate_sum_rule_verdict(ds)
    reasons = []
    if dv.verdict != "satisfied":
        reasons.append(f"approximate sum rules of order 1 {dv.verdict} (mu decay power {dv.mu_fit.power:.3g})")
    rho = None
    try:
        rho = limit_rho(limits, d, 0, **jsr_kw)
        if not rho.upper < 1:
            reasons.append(f"rho(T_A|V_0) upper bound {rho.upper:.6g} is not below 1")
    except PreconditionError as exc:
        reasons.append(str(exc))
    verdict = "C0-convergent" if not reasons else "not-established"
    return ConvergenceResult(verdict, dv, rho, reasons)


@dataclass
class HolderBound:
    verdict: str  # C^ell-convergent | not-established
    ell: int
    alpha: float | None
    rho: RhoBound | None
    defects: DefectVerdict | None
    rho_term: float | None
    delta_term: float | None
    reasons: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def as_dict(self):
        return {"verdict": self.verdict, "ell": self.ell, "alpha": self.alpha, "rho_term": self.rho_term,
                "delta_term": self.delta_term, "rho": self.rho.as_dict() if self.rho else None,
                "defects": self.defects.as_dict() if self.defects else None, "reasons": list(self.reasons),
                "provenance": dict(self.provenance)}


def _prepare(seq: MaskSequence, d: DilationSpec, horizon: int, normalize: bool) -> tuple[MaskSequence, list]:
    notes = []
    if normalize:
        try:
            seq = normalize_sequence(seq, d, horizon=horizon)
        except NormalizationRefused as exc:
            notes.append(f"normalization refused: {exc}")
    return seq, notes


def _candidate_ells(masks, d: DilationSpec, ell) -> list[int]:
    if ell is not None:
        return [ell]
    order = common_sum_rule_order(masks, d)
    return list(range(max(order - 1, 0), -1, -1))


def holder_lower_bound(seq: MaskSequence, d: DilationSpec, ell: int | None = None, horizon: int = 40,
                       normalize: bool = True, **jsr_kw) -> HolderBound:
    """alpha >= min(-log_m rho_A, -limsup log_m(delta_k)/k) with rho_A < m^-ell.

    With ``ell=None`` the largest admissible ell is searched downwards from
    the common sum-rule order of the limit masks.
    """
    if not d.is_isotropic:
        raise UnsupportedError("Hölder bounds need M = mI; use convergence_check for general M")
    _limits(seq)
    raw = seq
    seq, notes = _prepare(seq, d, horizon, normalize)
    limits = list(seq.limit_points)
    m = d.m
    last = None
    rho_cache: dict = {}
    for l in _candidate_ells(limits, d, ell):
        reasons = list(notes)
        kw = dict(jsr_kw)
        if ell is None:
            kw.setdefault("ceiling", float(m) ** (-l))  # rho_A >= m^-l rules this ell out
        # rescaling by m^s/(m^s + mu_k) -> 1 leaves summability and the delta rate unchanged,
        # and the raw masks avoid the rounding of the rescaled coefficients
        dv = approximate_sum_rule_verdict(defect_sequence(raw if not notes else seq, d, l, horizon))
        if dv.verdict != "satisfied":
            reasons.append(f"approximate sum rules of order {l + 1} {dv.verdict}")
        try:
            rho = rho_cache.get(l) or limit_rho(limits, d, l, **kw)
            rho_cache[l] = rho
        except PreconditionError as exc:
            last = HolderBound("not-established", l, None, None, dv, None, None, reasons + [str(exc)])
            continue
        if not rho.upper < float(m) ** (-l):
            reasons.append(f"rho_A in [{rho.lower:.6g}, {rho.upper:.6g}] is not below m^-{l}")
        rho_term = -_logm(rho.upper, m)
        delta_term = dv.delta_rate
        prov = {"rho": CERTIFIED if rho.certified else "bounded", "delta_term": EMPIRICAL}
        if reasons:
            last = HolderBound("not-established", l, None, rho, dv, rho_term, delta_term, reasons, prov)
            continue
        alpha = float(min(rho_term, delta_term))
        # the delta term comes from a finite fit; a zero tail makes it exact
        prov["alpha"] = EMPIRICAL if delta_term < rho_term else (CERTIFIED if dv.delta_fit.zero_tail else EMPIRICAL)
        return HolderBound(f"C{l}-convergent", l, alpha, rho, dv, rho_term, delta_term, reasons, prov)
    return last


@dataclass
class ExactHolder:
    status: str  # exact | edge | refused
    alpha: float | None
    interval: tuple | None
    ell: int | None
    checklist: dict
    rho: RhoBound | None = None

    def as_dict(self):
        return {"status": self.status, "alpha": self.alpha, "interval": list(self.interval) if self.interval else None,
                "ell": self.ell, "checklist": dict(self.checklist), "rho": self.rho.as_dict() if self.rho else None}


def stability_proxy(a: Mask, asserted: bool | None = None) -> tuple[bool, str]:
    """Univariate: no symmetric roots on the unit circle. Multivariate: the caller's assertion."""
    if a.s == 1:
        pairs = symmetric_roots_on_circle(a)
        return (not pairs), ("no symmetric roots on the unit circle" if not pairs else f"symmetric roots {pairs}")
    if asserted is None:
        return False, "stability is not verifiable for s > 1 without an explicit assertion"
    return bool(asserted), "asserted by the caller"


def exact_holder(seq: MaskSequence, d: DilationSpec, ell: int | None = None, horizon: int = 40,
                 stable: bool | None = None, normalize: bool = True, **jsr_kw) -> ExactHolder:
    """Exact exponent alpha = -log_m rho_a for a singleton limit set.

    Status ``edge`` marks alpha = ell + 1 exactly, just outside the strict
    hypothesis ell <= alpha < ell + 1; the value is reported but flagged.
    """
    limits = _limits(seq)
    check: dict = {}
    if len(limits) != 1:
        check["singleton limit set"] = f"fail: |A| = {len(limits)}"
        return ExactHolder("refused", None, None, ell, check)
    check["singleton limit set"] = "ok"
    if not d.is_isotropic:
        check["M = mI"] = "fail"
        return ExactHolder("refused", None, None, ell, check)
    a = limits[0]
    ok, why = stability_proxy(a, stable)
    check["stability"] = ("ok: " if ok else "fail: ") + why
    if not ok:
        return ExactHolder("refused", None, None, ell, check)
    raw = seq
    seq, notes = _prepare(seq, d, horizon, normalize)
    if notes:
        check["normalization"] = "fail: " + notes[0]
        return ExactHolder("refused", None, None, ell, check)
    a = seq.limit_points[0]
    m = d.m
    order = sum_rule_order(a, d)
    for l in _candidate_ells([a], d, ell):
        c = dict(check)
        if order < l + 1:
            c["sum rules"] = f"fail: order {order} < {l + 1}"
            continue
        c["sum rules"] = f"ok: order {order}"
        rho = limit_rho([a], d, l, **jsr_kw)
        if not rho.certified:
            c["rho_a certified"] = f"fail: [{rho.lower:.6g}, {rho.upper:.6g}] ({rho.status})"
            return ExactHolder("refused", None, None, l, c, rho)
        c["rho_a certified"] = "ok"
        dv = approximate_sum_rule_verdict(defect_sequence(raw, d, l, horizon))
        root = dv.limsup_delta_root
        if not root < rho.lower:
            c["limsup delta^(1/k) < rho_a"] = f"fail: {root:.6g} vs {rho.lower:.6g}"
            return ExactHolder("refused", None, None, l, c, rho)
        c["limsup delta^(1/k) < rho_a"] = f"ok: {root:.6g} < {rho.lower:.6g} ({EMPIRICAL})"
        lo_a, hi_a = -_logm(rho.upper, m), -_logm(rho.lower, m)
        alpha = -_logm(0.5 * (rho.lower + rho.upper), m)
        if not l <= lo_a:
            c["ell <= alpha < ell+1"] = f"fail: alpha = {alpha:.6g}"
            continue
        if hi_a < l + 1 - 1e-9:
            c["ell <= alpha < ell+1"] = "ok"
            return ExactHolder("exact", alpha, (lo_a, hi_a), l, c, rho)
        c["ell <= alpha < ell+1"] = f"edge: alpha = {alpha:.6g} = ell + 1"
        return ExactHolder("edge", alpha, (lo_a, hi_a), l, c, rho)
    return ExactHolder("refused", None, None, ell, check)


@dataclass
class NecessaryCheck:
    verdict: str  # consistent | inconsistent
    ell: int
    ratio: float
    tail: list
    stable: str

    def as_dict(self):
        return {"verdict": self.verdict, "ell": self.ell, "ratio": self.ratio, "tail": list(self.tail),
                "stability": self.stable}


def necessary_decay_check(seq: MaskSequence, d: DilationSpec, ell: int, horizon: int = 40) -> NecessaryCheck:
    """Trend of 2^{ell k} delta_k; a non-vanishing trend proves the scheme is not C^ell.

    Scope: univariate binary schemes whose limit mask has no symmetric roots
    on the unit circle.
    """
    if d.s != 1 or not d.is_isotropic or d.m != 2:
        raise UnsupportedError("the decay check covers univariate binary schemes only")
    limits = _limits(seq)
    notes = []
    for a in limits:
        ok, why = stability_proxy(a)
        if not ok:
            raise PreconditionError(f"limit mask {a.name or a!r} fails the stability proxy: {why}")
        notes.append(why)
    ds = defect_sequence(seq, d, ell, horizon)
    fit = fit_decay(ds.sigma, ds.sigma_floor)
    consistent = fit.zero_tail or fit.ratio < 0.999
    lo, hi = fit.window
    tail = [float(x) for x in ds.sigma[max(lo - 1, hi - 4):hi]]
    return NecessaryCheck("consistent" if consistent else "inconsistent", ell, fit.ratio, tail, "; ".join(notes))


# ---------------------------------------------------------------------------
# full report


@dataclass
class RegularityReport:
    scheme: str
    ell: int | None
    defects: dict | None
    rho: dict | None
    convergence: str
    holder_lower: float | None
    holder_exact: float | None
    exact_checklist: dict
    necessary: dict | None
    provenance: dict
    notes: list

    def as_dict(self):
        return {"scheme": self.scheme, "ell": self.ell, "defects": self.defects, "rho": self.rho,
                "convergence": self.convergence, "holder_lower": self.holder_lower,
                "holder_exact": self.holder_exact, "exact_checklist": self.exact_checklist,
                "necessary": self.necessary, "provenance": self.provenance, "notes": self.notes}


def analyze(seq: MaskSequence, d: DilationSpec, ell: int | None = None, horizon: int = 40,
            stable: bool | None = None, exact: bool = True, **jsr_kw) -> RegularityReport:
    """Run the convergence, Hölder and necessary-condition checks on one scheme."""
    notes: list = []
    prov: dict = {}
    conv = convergence_check(seq, d, horizon, **jsr_kw)
    notes.extend(conv.reasons)
    if not d.is_isotropic:
        return RegularityReport(seq.name, 0, conv.defects.as_dict(), conv.rho.as_dict() if conv.rho else None,
                                conv.verdict, None, None, {}, None, {"rho": CERTIFIED if conv.rho and
                                                                     conv.rho.certified else "bounded"}, notes)
    hb = holder_lower_bound(seq, d, ell, horizon, **jsr_kw)
    verdict = hb.verdict if hb.verdict != "not-established" else conv.verdict
    if hb.verdict == "not-established":
        notes.extend(r for r in hb.reasons if r not in notes)
    prov.update(hb.provenance)
    exact_alpha, checklist = None, {}
    if exact and len(seq.limit_points) == 1:
        ex = exact_holder(seq, d, hb.ell if hb.alpha is not None else ell, horizon, stable, **jsr_kw)
        checklist = ex.checklist
        if ex.status in ("exact", "edge"):
            exact_alpha = ex.alpha
            prov["holder_exact"] = EMPIRICAL  # rests on the fitted limsup of delta_k^(1/k)
            if ex.status == "edge":
                notes.append("alpha = ell + 1 sits on the edge of the exactness hypothesis; flagged")
    nec = None
    if d.s == 1 and d.m == 2 and hb.alpha is not None:
        try:
            nec = necessary_decay_check(seq, d, hb.ell + 1, horizon).as_dict()
        except (PreconditionError, UnsupportedError) as exc:
            notes.append(str(exc))
        # alpha >= ell + 1 together with "not C^(ell+1)" pins the exponent
        if (nec and nec["verdict"] == "inconsistent" and exact_alpha is None
                and hb.alpha >= hb.ell + 1 - 1e-6):
            exact_alpha = float(hb.ell + 1)
            prov["holder_exact"] = EMPIRICAL
            notes.append(f"alpha = {hb.ell + 1}: the lower bound reaches ell + 1 and the decay check rules out "
                         f"C^{hb.ell + 1}")
    notes = [n for i, n in enumerate(notes) if n not in notes[:i]
             and not any(o != n and o.startswith(n) for o in notes)]
    rho = hb.rho.as_dict() if hb.rho else None
    return RegularityReport(seq.name, hb.ell, hb.defects.as_dict() if hb.defects else conv.defects.as_dict(), rho,
                            verdict, hb.alpha, exact_alpha, checklist, nec, prov, notes)
