"""Command-line front end: config ingestion, analysis runs, reports and CSV emission.

Exit codes: 0 ok, 1 usage or invalid input, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings

import numpy as np

from . import cascade, regularity, schemes
from .errors import ConfigError, ParseError, SubdivregError, UnknownSchemeError
from .jsr import MatrixSet, jsr
from .lattice import DilationSpec
from .symbolcalc import Mask, MaskSequence, PeriodicTail, approximate_sum_rule_verdict, defect_sequence
from .transition import parse_matrices

log = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "subdivreg analysis config",
    "type": "object",
    "oneOf": [{"required": ["builtin"]}, {"required": ["masks"]}, {"required": ["fixture"]}],
    "properties": {
        "builtin": {"type": "string"},
        "params": {"type": "object"},
        "masks": {
            "type": "array", "minItems": 1,
            "items": {"type": "object", "required": ["coeffs"],
                      "properties": {"offset": {"type": "array", "items": {"type": "integer"}},
                                     "coeffs": {"type": "array"}, "scale": {"type": "number"},
                                     "name": {"type": "string"}}},
            "description": "one mask per level of a period; level k uses masks[(k - 1) mod len]",
        },
        "prefix": {"type": "array", "description": "masks used verbatim at levels 1..len(prefix)"},
        "fixture": {"type": "string", "enum": list(schemes.FIXTURES)},
        "dilation": {"oneOf": [{"type": "integer", "minimum": 2},
                               {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}}]},
        "name": {"type": "string"},
        "ell": {"type": ["integer", "null"], "minimum": 0},
        "horizon": {"type": "integer", "minimum": 4},
        "jsr": {"type": "object", "properties": {
            "gap": {"type": "number"}, "budget": {"type": "integer"}, "max_len": {"type": "integer"},
            "tree_depth": {"type": "integer"}, "time_limit": {"type": ["number", "null"]},
            "max_vertices": {"type": "integer"}}},
        "output": {"type": "object", "properties": {"json": {"type": "string"}, "csv": {"type": "string"}}},
    },
    "additionalProperties": False,
}

_JSR_KEYS = {"gap": "target_gap", "budget": "budget", "max_len": "max_len", "tree_depth": "tree_depth",
             "time_limit": "time_limit", "max_vertices": "max_vertices"}


class AnalysisConfig:
    """Validated config: exactly one scheme source plus analysis knobs."""

    def __init__(self, raw: dict):
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(raw) - set(CONFIG_SCHEMA["properties"])
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        sources = [k for k in ("builtin", "masks", "fixture") if k in raw]
        if len(sources) != 1:
            raise ConfigError(f"exactly one of builtin, masks, fixture is required (got {sources or 'none'})")
        self.raw = raw
        self.source = sources[0]
        self.ell = raw.get("ell")
        if self.ell is not None and (not isinstance(self.ell, int) or self.ell < 0):
            raise ConfigError("ell must be a nonnegative integer or null")
        self.horizon = int(raw.get("horizon", 40))
        if self.horizon < 4:
            raise ConfigError("horizon must be at least 4")
        jk = raw.get("jsr", {}) or {}
        bad = set(jk) - set(_JSR_KEYS)
        if bad:
            raise ConfigError(f"unknown jsr keys: {sorted(bad)}")
        self.jsr_kw = {_JSR_KEYS[k]: v for k, v in jk.items()}
        self.output = raw.get("output", {}) or {}
        self.descriptor: schemes.SchemeDescriptor | None = None
        self.fixture: MatrixSet | None = None
        if self.source == "builtin":
            params = raw.get("params", {}) or {}
            if not isinstance(params, dict):
                raise ConfigError("params must be an object")
            self.descriptor = schemes.builtin(raw["builtin"], params)
            self.name = self.descriptor.name
        elif self.source == "fixture":
            name = raw["fixture"]
            self.fixture = schemes.matrix_fixture(name)
            self.name = name
            self.dilation = DilationSpec.isotropic(3 if name == "example4" else 2, 1)
        else:
            self.descriptor = _inline_scheme(raw)
            self.name = self.descriptor.name
        if self.descriptor is not None:
            self.dilation = self.descriptor.dilation

    @classmethod
    def load(cls, path) -> "AnalysisConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        return cls(raw)


def _inline_mask(spec, i: int) -> Mask:
    if not isinstance(spec, dict) or "coeffs" not in spec:
        raise ConfigError(f"masks[{i}] must be an object with 'coeffs'")
    try:
        c = np.asarray(spec["coeffs"], dtype=float) * float(spec.get("scale", 1.0))
    except (TypeError, ValueError):
        raise ConfigError(f"masks[{i}].coeffs is not a rectangular numeric array") from None
    if c.ndim < 1 or c.size == 0:
        raise ConfigError(f"masks[{i}].coeffs is empty")
    off = spec.get("offset", [0] * c.ndim)
    if len(off) != c.ndim:
        raise ConfigError(f"masks[{i}].offset needs {c.ndim} entries")
    # regularity is translation invariant: a negative offset only moves the support into {0..N}^s
    off = [max(0, int(o)) for o in off]
    N = max(n - 1 + o for n, o in zip(c.shape, off))
    box = np.zeros((N + 1,) * c.ndim)
    box[tuple(slice(o, o + n) for o, n in zip(off, c.shape))] = c
    return Mask(box, name=spec.get("name", f"mask{i + 1}"))


def _inline_scheme(raw: dict) -> schemes.SchemeDescriptor:
    masks = raw["masks"]
    if not isinstance(masks, list) or not masks:
        raise ConfigError("masks must be a nonempty list")
    period = [_inline_mask(m, i) for i, m in enumerate(masks)]
    prefix = [_inline_mask(m, i) for i, m in enumerate(raw.get("prefix", []) or [])]
    s = period[0].s
    if any(m.s != s for m in period + prefix):
        raise ConfigError("all inline masks need the same dimension")
    dil = raw.get("dilation", 2)
    try:
        d = DilationSpec.isotropic(int(dil), s) if isinstance(dil, int) else DilationSpec(tuple(map(tuple, dil)))
    except SubdivregError as exc:
        raise ConfigError(f"dilation: {exc}") from None
    if d.s != s:
        raise ConfigError(f"dilation acts on Z^{d.s} but masks live on Z^{s}")
    N = max(m.N for m in period + prefix)
    period = [m.padded(N) for m in period]
    prefix = [m.padded(N) for m in prefix]
    name = raw.get("name", "inline")
    tail = period[0] if len(period) == 1 else PeriodicTail(tuple(period), offset=len(prefix) + 1)
    seq = MaskSequence(tail, prefix, period, name=name, N=N)
    kind = "stationary" if len(period) == 1 and not prefix else "periodic"
    return schemes.SchemeDescriptor(name, s, d, kind, seq)


# ---------------------------------------------------------------------------
# rendering


def _clean(obj):
    """JSON-ready copy without timing fields; tuples become lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items() if k not in ("seconds",)}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def render_json(report: dict) -> str:
    return json.dumps(_clean(report), indent=2, sort_keys=True, allow_nan=True) + "\n"


def parse_report(text: str) -> dict:
    return json.loads(text)


def _fmt(x, digits: int = 10) -> str:
    if x is None:
        return "n/a"
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return f"{x:.{digits}g}"


def _tag(certified: bool) -> str:
    return "[certified]" if certified else "[empirical]"


def render_analysis(rep: dict) -> str:
    lines = [f"scheme: {rep['scheme']}"]
    if rep.get("kind") == "fixture":
        r = rep["rho"]
        cert = r["status"] == "certified-exact"
        lines.append(f"matrices: {', '.join(rep['labels'])}  (dilation m = {rep['m']})")
        lines.append(f"jsr: [{_fmt(r['lower'])}, {_fmt(r['upper'])}] {r['status']} {_tag(cert)}")
        if r.get("candidate"):
            c = r["candidate"]
            lines.append(f"s.m.p. candidate: {c['label']}  rho^(1/p) = {_fmt(c['value'])} ({c['eig_type']})")
        lines.append(f"alpha >= -log_m(upper) = {_fmt(rep['alpha_lower'])} {_tag(cert)}")
        return "\n".join(lines) + "\n"
    lines.append(f"verdict: {rep['verdict']}")
    dv = rep.get("defects") or {}
    if dv:
        lines.append(f"approximate sum rules (ell = {rep['ell']}): {dv.get('verdict')} [empirical]"
                     f"  mu ratio {_fmt(dv['mu']['ratio'], 6)}, sigma ratio {_fmt(dv['sigma']['ratio'], 6)}")
    r = rep.get("rho")
    if r:
        cert = r["status"] == "certified-exact"
        fam = r.get("family", {})
        lines.append(f"rho(T_A|V_{fam.get('ell')}): [{_fmt(r['lower'])}, {_fmt(r['upper'])}] {r['status']} "
                     f"{_tag(cert)}")
        if r.get("candidate"):
            lines.append(f"s.m.p. candidate: {r['candidate']['label']}")
        if r.get("floor_active"):
            lines.append(f"rho equals the polynomial floor m^-(ell+1) = {_fmt(fam.get('floor'))} {_tag(True)}")
    if rep.get("holder_lower") is not None:
        lines.append(f"alpha >= {_fmt(rep['holder_lower'])} "
                     f"{_tag(rep.get('provenance', {}).get('alpha') == regularity.CERTIFIED)}")
    if rep.get("holder_exact") is not None:
        lines.append(f"alpha = {_fmt(rep['holder_exact'])} [empirical]")
    elif rep.get("exact_checklist"):
        failed = [f"{k}: {v}" for k, v in rep["exact_checklist"].items() if not str(v).startswith("ok")]
        if failed:
            lines.append("exact Hölder exponent refused: " + "; ".join(failed))
    nec = rep.get("necessary")
    if nec:
        lines.append(f"necessary decay check at ell = {nec['ell']}: {nec['verdict']} [empirical]")
    for n in rep.get("notes", []):
        lines.append(f"note: {n}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# commands


def cmd_analyze(cfg: AnalysisConfig, ell: int | None = None, horizon: int | None = None) -> dict:
    ell = cfg.ell if ell is None else ell
    horizon = cfg.horizon if horizon is None else horizon
    if cfg.source == "fixture":
        res = jsr(cfg.fixture, **cfg.jsr_kw)
        m = cfg.dilation.m
        alpha = -math.log(res.upper) / math.log(m) if res.upper > 0 else math.inf
        return {"scheme": cfg.name, "kind": "fixture", "labels": list(cfg.fixture.labels), "m": m,
                "rho": res.as_dict(cfg.fixture.labels), "alpha_lower": alpha,
                "provenance": {"rho": "certified" if res.status == "certified-exact" else "bounded"}}
    desc = cfg.descriptor
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = regularity.analyze(desc.sequence, desc.dilation, ell, horizon, **cfg.jsr_kw)
        out = rep.as_dict()
        out["verdict"] = out.pop("convergence")
        out["kind"] = desc.kind
        if desc.s == 1:
            dv = approximate_sum_rule_verdict(defect_sequence(desc.sequence, desc.dilation, 0, horizon))
            if dv.mu_fit.verdict == "violated":
                fp = cascade.fourier_product(desc.sequence, desc.dilation, 0.0, depth=min(horizon, 30))
                out["notes"].append(f"divergence: the Fourier product at omega = 0 grows like its partial products "
                                    f"{_fmt(fp.partial[-1], 6)} after {fp.depth} levels; {fp.warning}")
    seen, notes = set(), []
    for n in out["notes"]:
        if n not in seen:
            seen.add(n)
            notes.append(n)
    out["notes"] = notes
    return out


def cmd_jsr(path, gap: float = 1e-6, budget: int = 200000, **kw) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise SubdivregError(f"{path}: {exc.strerror}") from None
    mats, labels = parse_matrices(text)
    ms = MatrixSet(mats, labels)
    res = jsr(ms, target_gap=gap, budget=budget, **kw)
    return {"file": str(path), "labels": labels, **res.as_dict(labels)}


def render_jsr(rep: dict) -> str:
    cert = rep["status"] == "certified-exact"
    lines = [f"matrices: {', '.join(rep['labels'])}",
             f"jsr: [{_fmt(rep['lower'], 12)}, {_fmt(rep['upper'], 12)}] {rep['status']} {_tag(cert)}"]
    if rep.get("candidate"):
        c = rep["candidate"]
        lines.append(f"s.m.p. candidate: {c['label']}  rho^(1/p) = {_fmt(c['value'], 12)} ({c['eig_type']})")
    return "\n".join(lines) + "\n"


def cmd_sample(cfg: AnalysisConfig, levels: int, out, centered: bool = True) -> int:
    if cfg.descriptor is None:
        raise ConfigError("sample needs a builtin or inline mask source, not a matrix fixture")
    data = cascade.basic_limit_samples(cfg.descriptor.sequence, cfg.descriptor.dilation, levels)
    cascade.write_csv(data, out, centered)
    return data.values.size


def cmd_defects(cfg: AnalysisConfig, ell: int, horizon: int) -> dict:
    if cfg.descriptor is None:
        raise ConfigError("defects needs a builtin or inline mask source, not a matrix fixture")
    ds = defect_sequence(cfg.descriptor.sequence, cfg.descriptor.dilation, ell, horizon)
    # the verdict needs a few levels to fit; short tables borrow a longer run
    full = ds if horizon >= 8 else defect_sequence(cfg.descriptor.sequence, cfg.descriptor.dilation, ell, 8)
    dv = approximate_sum_rule_verdict(full)
    return {"scheme": cfg.name, "ell": ell, "horizon": horizon,
            "k": [int(k) for k in ds.levels], "mu": ds.mu.tolist(), "delta": ds.delta.tolist(),
            "sigma": ds.sigma.tolist(), "fit": dv.as_dict()}


def render_defects(rep: dict) -> str:
    w = 24
    lines = [f"scheme: {rep['scheme']}  ell = {rep['ell']}  horizon = {rep['horizon']}",
             f"{'k':>4} {'mu_k':>{w}} {'delta_k':>{w}} {'sigma_k':>{w}}"]
    for k, mu, de, si in zip(rep["k"], rep["mu"], rep["delta"], rep["sigma"]):
        lines.append(f"{k:>4} {mu:>{w}.17g} {de:>{w}.17g} {si:>{w}.17g}")
    f = rep["fit"]
    lines.append(f"mu: {f['mu']['verdict']} (ratio {_fmt(f['mu']['ratio'], 6)})  "
                 f"sigma: {f['sigma']['verdict']} (ratio {_fmt(f['sigma']['ratio'], 6)}) [empirical]")
    lines.append(f"verdict: approximate sum rules of order {rep['ell'] + 1} {f['verdict']}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="subdivreg", description="Convergence and Hölder regularity of subdivision schemes.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="full regularity analysis of a configured scheme")
    a.add_argument("config")
    a.add_argument("--json", action="store_true", help="machine-readable report")
    a.add_argument("--ell", type=int)
    a.add_argument("--horizon", type=int)

    j = sub.add_parser("jsr", help="joint spectral radius of a matrix dump")
    j.add_argument("file")
    j.add_argument("--gap", type=float, default=1e-6)
    j.add_argument("--budget", type=int, default=200000)
    j.add_argument("--max-len", type=int, default=30)
    j.add_argument("--json", action="store_true")

    s = sub.add_parser("sample", help="basic limit function samples as CSV")
    s.add_argument("config")
    s.add_argument("--levels", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--plain", action="store_true",
                   help="place sample alpha at M^-k alpha instead of the centred M^-k (alpha + tau)")

    d = sub.add_parser("defects", help="sum rule defect table")
    d.add_argument("config")
    d.add_argument("--ell", type=int, default=0)
    d.add_argument("--horizon", type=int, default=20)
    d.add_argument("--json", action="store_true")

    sub.add_parser("schema", help="print the config JSON schema")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "schema":
            sys.stdout.write(json.dumps(CONFIG_SCHEMA, indent=2) + "\n")
        elif args.command == "analyze":
            cfg = AnalysisConfig.load(args.config)
            rep = cmd_analyze(cfg, args.ell, args.horizon)
            text = render_json(rep) if args.json else render_analysis(rep)
            sys.stdout.write(text)
            if cfg.output.get("json"):
                with open(cfg.output["json"], "w") as fh:
                    fh.write(render_json(rep))
        elif args.command == "jsr":
            if args.gap <= 0 or args.budget < 1:
                parser.error("--gap must be positive and --budget at least 1")
            rep = cmd_jsr(args.file, args.gap, args.budget, max_len=args.max_len)
            sys.stdout.write(render_json(rep) if args.json else render_jsr(rep))
        elif args.command == "sample":
            if args.levels < 1:
                parser.error("--levels must be at least 1")
            cfg = AnalysisConfig.load(args.config)
            n = cmd_sample(cfg, args.levels, args.out, centered=not args.plain)
            sys.stdout.write(f"wrote {n} rows to {args.out}\n")
        elif args.command == "defects":
            if args.ell < 0 or args.horizon < 1:
                parser.error("--ell must be >= 0 and --horizon >= 1")
            cfg = AnalysisConfig.load(args.config)
            rep = cmd_defects(cfg, args.ell, args.horizon)
            sys.stdout.write(render_json(rep) if args.json else render_defects(rep))
    except (ConfigError, ParseError, UnknownSchemeError) as exc:
        sys.stderr.write(f"subdivreg: error: {exc}\n")
        return EXIT_USAGE
    except FileNotFoundError as exc:
        sys.stderr.write(f"subdivreg: error: {exc.filename}: no such file\n")
        return EXIT_USAGE
    except (SubdivregError, OSError, ValueError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"subdivreg: error: {type(exc).__name__}: {exc}\n")
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
