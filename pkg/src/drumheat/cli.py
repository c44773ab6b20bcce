"""Command-line front end.

One subcommand per operation: drum inspection (`dim`, `inspect`), single
MC estimates (`shc`, `rhc`, `skbm`, `defect`), analytic references
(`perimeter`, `density`, `oracle-rhc`, `oracle-skbm`), the renewal solver
(`renewal`), and the experiment pipeline (`experiment`, `fit`).

Domains are flat strings so plans stay diffable:

    interval:a,b    union:a1,b1;a2,b2    cantor[:depth]
    gasket[:depth[,eps]]    disk:cx,cy,r    drum:@file

Numbers in domain strings and number lists accept fractions (1/3) and
logarithms (ln2, 1.5ln3).  Exit codes: 0 ok, 2 domain or parameter error,
3 estimator error, 4 solver non-convergence, 5 harness error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .errors import (BadPlanFile, ConstraintViolated, DeficitNotResolved,
                     DomainError, DrumheatError, GridTooCoarse, NoConvergence,
                     ToleranceNotMet, UnsupportedDomain)
from .geometry import (DEPTH_CAP, CantorComplement, Disk, DrumSpec,
                       GasketComplement, IFSDrum, Interval, IntervalUnion,
                       cantor_drum, gasket_drum, load_drum_spec,
                       solve_dimension, validate_drum, volume)
from .simulate import (MCConfig, PathScheme, SeedPlan, StableParams,
                       config_digest, interaction_defect, rhc, shc, skbm_shc)
from . import analytic, harness, renewal

EXIT_OK = 0
EXIT_PARAM = 2
EXIT_ESTIMATOR = 3
EXIT_SOLVER = 4
EXIT_HARNESS = 5

_DEFAULT_SEED = 20260815


# ---------------------------------------------------------------------------
# parsing helpers
# ---------------------------------------------------------------------------

_LN_RE = re.compile(r"^([0-9./]*)ln\(?([0-9./]+)\)?$")


def _num(text: str) -> float:
    """Float parser for CLI number tokens: plain floats, fractions p/q,
    and logarithm forms ln2 / 1.5ln3 / ln(3)/2 is not supported, keep the
    coefficient in front."""
    s = text.strip()
    m = _LN_RE.match(s)
    if m:
        coef = _frac(m.group(1)) if m.group(1) else 1.0
        return coef * math.log(_frac(m.group(2)))
    return _frac(s)


def _frac(s: str) -> float:
    if "/" in s:
        p, q = s.split("/", 1)
        return float(p) / float(q)
    return float(s)


def _num_list(text: str) -> list:
    return [_num(tok) for tok in text.split(",") if tok.strip()]


@dataclass
class DomainHandle:
    domain: object
    drum: DrumSpec | None
    domain_id: str
    volume: float


def parse_domain(text: str) -> DomainHandle:
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    if kind == "interval":
        a, b = _num_list(rest)
        dom = Interval(a, b)
    elif kind == "union":
        pairs = tuple(tuple(_num_list(seg)) for seg in rest.split(";") if seg.strip())
        dom = IntervalUnion(pairs)
    elif kind == "cantor":
        depth = int(rest) if rest else DEPTH_CAP
        dom = CantorComplement(depth_cap=depth)
        return DomainHandle(dom, cantor_drum(), text, dom.volume())
    elif kind == "gasket":
        parts = rest.split(",") if rest else []
        depth = int(parts[0]) if parts and parts[0] else 30
        eps = _num(parts[1]) if len(parts) > 1 else 0.0
        dom = GasketComplement(depth_cap=depth, corner_radius=eps)
        return DomainHandle(dom, gasket_drum(), text, dom.volume())
    elif kind == "disk":
        cx, cy, r = _num_list(rest)
        dom = Disk((cx, cy), r)
    elif kind == "drum":
        if not rest.startswith("@"):
            raise DomainError("drum domains are written drum:@file")
        spec = load_drum_spec(rest[1:])
        dom = IFSDrum(spec)
        return DomainHandle(dom, spec, text, dom.volume())
    else:
        raise DomainError(f"unknown domain kind {kind!r}")
    return DomainHandle(dom, None, text, dom.volume())


def _load_kv(path: str) -> dict:
    """key=value file with a schema=1 first line and # comments."""
    out = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh]
    except OSError as exc:
        raise BadPlanFile(f"cannot read {path}: {exc}") from exc
    body = [ln for ln in lines if ln and not ln.startswith("#")]
    if not body or body[0].replace(" ", "") != "schema=1":
        raise BadPlanFile(f"{path}: first line must be schema=1")
    for ln in body[1:]:
        if "=" not in ln:
            raise BadPlanFile(f"{path}: expected key=value, got {ln!r}")
        k, _, v = ln.partition("=")
        out[k.strip()] = v.strip()
    return out


def _fail(code: int, exc_or_msg) -> int:
    if isinstance(exc_or_msg, BaseException):
        msg = f"{type(exc_or_msg).__name__}: {exc_or_msg}"
    else:
        msg = str(exc_or_msg)
    print(f"error: {msg}", file=sys.stderr)
    return code


def _banner(args) -> None:
    skip = {"func", "config"}
    kv = {k: v for k, v in sorted(vars(args).items())
          if k not in skip and v is not None}
    digest = config_digest(**{k: str(v) for k, v in kv.items()})
    line = " ".join(f"{k}={v}" for k, v in kv.items())
    print(f"# drumheat {args.command} {line} | digest={digest}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_dim(args) -> int:
    try:
        r = _num_list(args.r)
        b = solve_dimension(tuple(r), args.d)
    except (DrumheatError, ValueError) as exc:
        return _fail(EXIT_PARAM, exc)
    _banner(args)
    print(f"b = {b!r}")
    return EXIT_OK


def _append_record(path: str, rec, fmt: str) -> None:
    fresh = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", encoding="utf-8", newline="\n") as fh:
        if fmt == "csv":
            if fresh:
                fh.write("# schema=1\n")
                fh.write("domain,alpha,t,estimator,value,stderr,n,seed\n")
            fh.write(f"{rec.domain_id},{rec.alpha!r},{rec.t!r},{rec.estimator},"
                     f"{rec.value!r},{rec.stderr!r},{rec.n_samples},{rec.seed}\n")
        else:
            if fresh:
                fh.write(json.dumps({"schema": 1}, sort_keys=True,
                                    separators=(",", ":")) + "\n")
            fh.write(rec.to_line() + "\n")


def cmd_estimate(args) -> int:
    name = args.command
    try:
        handle = parse_domain(args.domain)
        if name == "defect" and handle.drum is None:
            raise DomainError("the defect estimator needs an IFS drum "
                              "(cantor, gasket, or drum:@file)")
        dim = handle.drum.d if name == "defect" else handle.domain.dim
        params = StableParams(args.alpha, d=dim)
    except (DrumheatError, ValueError) as exc:
        return _fail(EXIT_PARAM, exc)
    _banner(args)
    scheme = PathScheme(n_steps=args.steps, membership_depth=args.depth,
                        richardson_levels=args.levels)
    config = MCConfig(n_points=args.n, scheme=scheme, seeds=SeedPlan(args.seed))
    try:
        if name == "shc":
            est = shc(handle.domain, params, args.t, config)
        elif name == "rhc":
            est = rhc(handle.domain, params, args.t, config)
        elif name == "skbm":
            est = skbm_shc(handle.domain, params, args.t, config)
        else:
            est = interaction_defect(handle.drum, params, args.t, config)
    except DrumheatError as exc:
        return _fail(EXIT_ESTIMATOR, exc)
    print(f"{name} = {est}")
    if args.out:
        rec = harness.RunRecord(
            domain_id=handle.domain_id, alpha=float(args.alpha),
            t=float(args.t), estimator=name, value=float(est.value),
            stderr=float(est.stderr), n_samples=est.n_samples,
            seed=args.seed, digest=est.digest,
            extra=harness._jsonable_extra(est.extra))
        _append_record(args.out, rec, args.format)
        print(f"# appended record to {args.out}")
    return EXIT_OK


def cmd_perimeter(args) -> int:
    try:
        handle_kind = args.domain.partition(":")[0].strip().lower()
        if handle_kind == "interval":
            a, b = _num_list(args.domain.partition(":")[2])
            val = analytic.per_alpha_interval(a, b, args.alpha)
        elif handle_kind == "union":
            pairs = [tuple(_num_list(seg))
                     for seg in args.domain.partition(":")[2].split(";") if seg.strip()]
            val = analytic.per_alpha_gap_union(pairs, args.alpha)
        elif handle_kind == "cantor":
            table = analytic.cantor_perimeter_table(args.gap_level, args.alpha)
            _banner(args)
            print(f"{'level':>5} {'per_alpha':>22} {'exterior_only':>22}")
            for row in table:
                print(f"{row.level:5d} {row.value:22.15g} {row.exterior_only:22.15g}")
            print(f"interval value = {table[-1].interval_value!r}")
            return EXIT_OK
        else:
            raise UnsupportedDomain(
                f"perimeter has closed forms for interval, union, cantor; "
                f"got {args.domain!r}")
    except (DrumheatError, ValueError) as exc:
        return _fail(EXIT_PARAM, exc)
    _banner(args)
    print(f"Per = {val!r}")
    return EXIT_OK


def cmd_density(args) -> int:
    try:
        val = analytic.stable_density_1d(args.alpha, args.t, args.x)
    except DrumheatError as exc:
        return _fail(EXIT_PARAM, exc)
    _banner(args)
    cfg = analytic.QuadratureConfig()
    print(f"p = {val!r} (quadrature budget abs_tol={cfg.abs_tol:g})")
    return EXIT_OK


def cmd_oracle_rhc(args) -> int:
    try:
        deficit = analytic.rhc_interval_deficit(args.alpha, args.t)
    except DrumheatError as exc:
        return _fail(EXIT_PARAM, exc)
    _banner(args)
    cfg = analytic.QuadratureConfig()
    bound = max(2e-8, 10.0 * cfg.rel_tol * abs(deficit))
    print(f"H = {1.0 - deficit!r}")
    print(f"deficit = {deficit!r}")
    print(f"error bound = {bound:g}")
    return EXIT_OK


def cmd_oracle_skbm(args) -> int:
    try:
        sv = analytic.skbm_interval_series(args.alpha, args.t, args.terms)
    except DrumheatError as exc:
        return _fail(EXIT_PARAM, exc)
    _banner(args)
    print(f"Q = {sv.value!r}")
    print(f"tail bound = {sv.tail_bound:g}")
    return EXIT_OK


_PHI_BUILTINS = {
    "exp": (lambda z: np.exp(-np.abs(np.asarray(z, float))), 1.0, 1.0),
    "sech": (lambda z: 1.0 / np.cosh(np.asarray(z, float)), 2.0, 1.0),
}


def _parse_phi(args) -> renewal.ForcingFunction:
    if args.phi in _PHI_BUILTINS:
        fn, c1, c2 = _PHI_BUILTINS[args.phi]
        return renewal.ForcingFunction(fn, c1, c2)
    if args.phi.startswith("@"):
        if args.c1 is None or args.c2 is None:
            raise DomainError("tabulated phi needs --c1 and --c2 decay certificates")
        data = np.loadtxt(args.phi[1:])
        if data.ndim != 2 or data.shape[1] != 2:
            raise DomainError("phi table must have two columns: z value")
        zs, vs = data[:, 0], data[:, 1]
        order = np.argsort(zs)
        zs, vs = zs[order], vs[order]
        fn = lambda z: np.interp(np.asarray(z, float), zs, vs, left=0.0, right=0.0)
        return renewal.ForcingFunction(fn, args.c1, args.c2)
    raise DomainError(f"phi must be one of {sorted(_PHI_BUILTINS)} or @file")


def _parse_span_override(text: str, shifts) -> renewal.SpanResult:
    if not text.startswith("exact:"):
        raise DomainError("--span must look like exact:<number>, e.g. exact:ln3")
    span = _num(text[len("exact:"):])
    if span <= 0.0:
        raise DomainError("span override must be positive")
    mult = [int(round(g / span)) for g in shifts]
    if any(m < 1 for m in mult) or \
            any(abs(g - m * span) > 1e-9 * g for g, m in zip(shifts, mult)):
        raise DomainError(
            f"span override {span!r} does not divide the shifts {tuple(shifts)}")
    g = 0
    for m in mult:
        g = math.gcd(g, m)
    return renewal.SpanResult(True, span * g, tuple(m // g for m in mult))


def cmd_renewal(args) -> int:
    try:
        weights = _num_list(args.c)
        shifts = _num_list(args.gamma)
        eq = renewal.RenewalEquation(tuple(weights), tuple(shifts))
        phi = _parse_phi(args)
        z_lo, z_hi = _num_list(args.z)
        span = (_parse_span_override(args.span, eq.shifts) if args.span
                else renewal.detect_arithmetic(eq.shifts))
    except (DrumheatError, ValueError, OSError) as exc:
        return _fail(EXIT_PARAM, exc)
    _banner(args)
    if span.arithmetic:
        print(f"arithmetic, span {span.span:.12g} (multipliers {span.certificate})")
    else:
        print("non-arithmetic (depth-64)")
    h = min(eq.shifts) / args.cells_per_shift
    n = int(math.ceil((z_hi - z_lo) / h)) + 1
    try:
        res = renewal.solve_series(eq, phi, (z_lo, h, n), tol=args.tol)
    except DomainError as exc:
        return _fail(EXIT_PARAM, exc)
    except (NoConvergence, GridTooCoarse, ToleranceNotMet) as exc:
        return _fail(EXIT_SOLVER, exc)
    print(f"iterations = {res.n_iter}, residual sup = {res.residual_sup:.3e}, "
          f"tail bound = {res.tail_bound:.3e}")
    zs = res.f.z
    lo_show = z_lo + max(eq.shifts)
    show = np.linspace(lo_show, z_hi, 11)
    print(f"{'z':>10} {'f(z)':>18}")
    for zq in show:
        idx = int(round((zq - z_lo) / h))
        idx = min(max(idx, 0), len(zs) - 1)
        print(f"{zs[idx]:10.4f} {res.f.values[idx]:18.12g}")
    try:
        if span.arithmetic:
            sampler = renewal.asymptote_arithmetic(eq, phi, span.span)
            pts = z_hi - span.span + np.linspace(0.0, span.span, 5)
            vals = " ".join(f"f({p:.4f})={float(sampler(np.array([p]))[0]):.10g}"
                            for p in pts)
            print(f"asymptotic period = {span.span!r}")
            print(f"limit samples: {vals}")
        else:
            a = renewal.asymptote_nonarithmetic(eq, phi)
            print(f"asymptote = {a!r}")
    except (NoConvergence, GridTooCoarse) as exc:
        return _fail(EXIT_SOLVER, exc)
    return EXIT_OK


def _plan_from_file(args) -> tuple:
    kv = _load_kv(args.plan)
    required = ("domain", "alphas", "t_min", "t_max", "points_per_decade",
                "estimators", "n_points", "seed", "out")
    missing = [k for k in required if k not in kv]
    if missing:
        raise BadPlanFile(f"{args.plan}: missing keys {missing}")
    handle = parse_domain(kv["domain"])
    scheme = PathScheme(n_steps=int(kv.get("n_steps", 64)),
                        membership_depth=(int(kv["depth"]) if "depth" in kv
                                          else None),
                        richardson_levels=int(kv.get("levels", 2)))
    return harness.ExperimentPlan(
        domain_id=kv["domain"],
        alphas=tuple(_num_list(kv["alphas"])),
        t_min=_num(kv["t_min"]), t_max=_num(kv["t_max"]),
        points_per_decade=int(kv["points_per_decade"]),
        estimators=tuple(e.strip() for e in kv["estimators"].split(",")),
        n_points=int(kv["n_points"]), scheme=scheme,
        master_seed=int(kv["seed"]), out_path=kv["out"],
        domain=handle.domain, drum=handle.drum,
        log_periodic=kv.get("log_periodic", "0") in ("1", "true", "yes")), handle


def cmd_experiment(args) -> int:
    try:
        plan, handle = _plan_from_file(args)
    except (DrumheatError, ValueError) as exc:
        return _fail(EXIT_PARAM if isinstance(exc, (DomainError, ValueError))
                     else EXIT_HARNESS, exc)
    _banner(args)
    try:
        records = harness.run_plan(plan, workers=args.threads)
    except DrumheatError as exc:
        return _fail(EXIT_HARNESS, exc)
    errors = [r for r in records if r.error]
    print(f"records = {len(records)} ({len(errors)} errored cells) -> {plan.out_path}")
    stem = os.path.splitext(plan.out_path)[0]
    harness.write_csv(records, stem + ".csv")
    series = []
    for est_name in plan.estimators:
        vol = None if est_name == "defect" else handle.volume
        for a in plan.alphas:
            sub = [r for r in records
                   if r.estimator == est_name and r.alpha == float(a)
                   and r.error is None]
            if not sub:
                continue
            fit = None
            try:
                fit = harness.fit_power_exponent(sub, volume=vol)
                print(f"fit {est_name} alpha={a:g}: exponent = "
                      f"{fit.exponent:.6f} +- {fit.exponent_stderr:.6f}, "
                      f"amplitude = {fit.amplitude:.6g}")
            except DrumheatError as exc:
                print(f"fit {est_name} alpha={a:g}: skipped ({exc})")
            deficit = [(vol - r.value) if vol is not None else r.value for r in sub]
            series.append({"label": f"{est_name} a={a:g}",
                           "t": [r.t for r in sub], "deficit": deficit,
                           "stderr": [r.stderr for r in sub], "fit": fit})
    harness.write_decay_svg(series, stem + ".svg", title=plan.domain_id)
    print(f"wrote {stem}.csv and {stem}.svg")
    return EXIT_OK


def cmd_fit(args) -> int:
    try:
        records = harness.load_records(args.records)
    except (BadPlanFile, OSError) as exc:
        return _fail(EXIT_HARNESS, exc)
    _banner(args)
    if args.compare:
        if args.d is None or args.boundary_dim is None:
            return _fail(EXIT_PARAM, "--compare needs --d and --boundary-dim")
        pairs = []
        for r in records:
            key = (r.estimator, r.alpha)
            if key not in pairs:
                pairs.append(key)
        fits = []
        for est_name, a in pairs:
            sub = [r for r in records
                   if r.estimator == est_name and r.alpha == a and r.error is None]
            vol = None if est_name == "defect" else args.volume
            try:
                fits.append((est_name, a, harness.fit_power_exponent(sub, volume=vol)))
            except DrumheatError as exc:
                print(f"fit {est_name} alpha={a:g}: skipped ({exc})")
        report = harness.compare_rates(fits, args.d, args.boundary_dim)
        for line in report.lines():
            print(line)
        return EXIT_OK
    if args.estimator is None or args.alpha is None:
        return _fail(EXIT_PARAM, "fit needs --estimator and --alpha (or --compare)")
    sub = [r for r in records
           if r.estimator == args.estimator
           and math.isclose(r.alpha, args.alpha, rel_tol=1e-12)
           and r.error is None]
    vol = None if args.estimator == "defect" else args.volume
    try:
        fit = harness.fit_power_exponent(sub, volume=vol)
    except DrumheatError as exc:
        return _fail(EXIT_HARNESS, exc)
    print(f"exponent = {fit.exponent!r} +- {fit.exponent_stderr!r}")
    print(f"amplitude = {fit.amplitude!r}")
    print(f"n = {fit.n_points}, chi2 = {fit.chi2:.6g}")
    if args.log_periodic is not None:
        try:
            lp = harness.log_periodic_extract(sub, args.log_periodic, volume=vol)
        except DrumheatError as exc:
            return _fail(EXIT_HARNESS, exc)
        print(f"log-periodic: period = {lp.period!r}, amplitude = "
              f"{lp.amplitude!r}, phase = {lp.phase!r}, "
              f"significance = {lp.significance!r}")
    if args.plot:
        deficit = [(vol - r.value) if vol is not None else r.value for r in sub]
        harness.write_decay_svg(
            [{"label": f"{args.estimator} a={args.alpha:g}",
              "t": [r.t for r in sub], "deficit": deficit,
              "stderr": [r.stderr for r in sub], "fit": fit}],
            args.plot, title=os.path.basename(args.records))
        print(f"wrote {args.plot}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    try:
        handle = parse_domain(args.domain)
    except (DrumheatError, ValueError) as exc:
        return _fail(EXIT_PARAM, exc)
    _banner(args)
    print(f"domain = {handle.domain.describe()}")
    print(f"volume = {handle.volume!r}")
    if handle.drum is not None:
        print(f"dimension b = {handle.drum.dimension!r}")
        report = validate_drum(handle.drum)
        for line in report.lines():
            print(line)
        if not report.all_passed:
            return EXIT_PARAM
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser assembly
# ---------------------------------------------------------------------------

def _global_parser() -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--seed", type=int, default=_DEFAULT_SEED,
                   help="master seed (64-bit) for all randomness")
    g.add_argument("--threads", type=int, default=1,
                   help="worker count for experiment cells")
    g.add_argument("--out", type=str, default=None,
                   help="output path for records")
    g.add_argument("--format", choices=("csv", "jsonl"), default="jsonl",
                   help="record format for --out")
    g.add_argument("--config", type=str, default=None,
                   help="key=value file merged under the flags (flags win)")
    return g


def build_parser() -> argparse.ArgumentParser:
    glob = _global_parser()
    parser = argparse.ArgumentParser(
        prog="drumheat",
        description="heat-content laboratory for fractal drums")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dim", parents=[glob], help="boundary dimension from contraction ratios")
    p.add_argument("--r", required=True, help="comma-separated contraction ratios")
    p.add_argument("--d", type=int, required=True, help="ambient dimension")
    p.set_defaults(func=cmd_dim)

    for name, desc in (("shc", "spectral heat content estimate"),
                       ("rhc", "regular heat content estimate"),
                       ("skbm", "subordinate killed Brownian heat content"),
                       ("defect", "interaction defect estimate")):
        p = sub.add_parser(name, parents=[glob], help=desc)
        p.add_argument("--domain", required=True)
        p.add_argument("--alpha", type=_num, required=True)
        p.add_argument("--t", type=_num, required=True)
        p.add_argument("--n", type=int, default=200000, help="spatial sample count")
        p.add_argument("--steps", type=int, default=64, help="time steps per path")
        p.add_argument("--depth", type=int, default=None,
                       help="membership resolution depth (default: per-run "
                            "rule, displacement-tied for grid kills)")
        p.add_argument("--levels", type=int, default=0,
                       help="Richardson extrapolation levels")
        p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("perimeter", parents=[glob], help="fractional perimeter values")
    p.add_argument("--domain", required=True)
    p.add_argument("--alpha", type=_num, required=True)
    p.add_argument("--gap-level", type=int, default=12,
                   help="construction level for cantor convergence table")
    p.set_defaults(func=cmd_perimeter)

    p = sub.add_parser("density", parents=[glob], help="stable transition density")
    p.add_argument("--alpha", type=_num, required=True)
    p.add_argument("--t", type=_num, required=True)
    p.add_argument("--x", type=_num, required=True)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("oracle-rhc", parents=[glob],
                       help="interval regular heat content reference value")
    p.add_argument("--alpha", type=_num, required=True)
    p.add_argument("--t", type=_num, required=True)
    p.set_defaults(func=cmd_oracle_rhc)

    p = sub.add_parser("oracle-skbm", parents=[glob],
                       help="interval subordinate-killed series reference value")
    p.add_argument("--alpha", type=_num, required=True)
    p.add_argument("--t", type=_num, required=True)
    p.add_argument("--terms", type=int, default=10001)
    p.set_defaults(func=cmd_oracle_skbm)

    p = sub.add_parser("renewal", parents=[glob], help="renewal equation solver")
    p.add_argument("--c", required=True, help="weights, comma separated")
    p.add_argument("--gamma", required=True, help="shifts (ln2,ln3 forms allowed)")
    p.add_argument("--phi", default="exp", help="forcing: exp, sech, or @file")
    p.add_argument("--c1", type=_num, default=None, help="decay certificate scale")
    p.add_argument("--c2", type=_num, default=None, help="decay certificate rate")
    p.add_argument("--z", default="-18,30", help="solution window z_lo,z_hi")
    p.add_argument("--cells-per-shift", type=int, default=1024)
    p.add_argument("--tol", type=_num, default=1e-10)
    p.add_argument("--span", default=None,
                   help="override span detection: exact:<number>, e.g. exact:ln3")
    p.set_defaults(func=cmd_renewal)

    p = sub.add_parser("experiment", parents=[glob], help="run a plan file")
    p.add_argument("--plan", required=True, help="key=value plan file (schema=1)")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("fit", parents=[glob], help="fit decay records")
    p.add_argument("--records", required=True, help="JSONL record file")
    p.add_argument("--estimator", default=None)
    p.add_argument("--alpha", type=_num, default=None)
    p.add_argument("--volume", type=_num, default=1.0,
                   help="exact domain volume for deficits")
    p.add_argument("--log-periodic", type=_num, default=None, metavar="PERIOD",
                   help="extract a log-periodic component at this expected period")
    p.add_argument("--compare", action="store_true",
                   help="rate-comparison table over all (estimator, alpha) pairs")
    p.add_argument("--d", type=int, default=None, help="ambient dimension for --compare")
    p.add_argument("--boundary-dim", type=_num, default=None,
                   help="boundary dimension for --compare")
    p.add_argument("--plot", default=None, help="write an SVG to this path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("inspect", parents=[glob], help="validate and describe a domain")
    p.add_argument("--domain", required=True)
    p.set_defaults(func=cmd_inspect)

    return parser


def _expand_config(argv, parser) -> list:
    """Splice --config key=value entries into argv right after the command
    token, so argparse sees them with normal type handling and explicit
    flags (parsed later) override them.  Unknown keys surface as the usual
    unrecognized-argument error."""
    path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
    if path is None:
        return argv
    kv = _load_kv(path)
    sub = next(a for a in parser._actions
               if isinstance(a, argparse._SubParsersAction))
    cmd_idx = next((i for i, tok in enumerate(argv) if tok in sub.choices), None)
    if cmd_idx is None:
        return argv
    actions = {a.dest: a for a in sub.choices[argv[cmd_idx]]._actions}
    spliced = []
    for key, raw in kv.items():
        dest = key.replace("-", "_")
        if dest == "config":
            continue
        action = actions.get(dest)
        if isinstance(action, argparse._StoreTrueAction):
            if raw.lower() in ("1", "true", "yes"):
                spliced.append(f"--{key.replace('_', '-')}")
        else:
            spliced.append(f"--{key.replace('_', '-')}={raw}")
    return argv[:cmd_idx + 1] + spliced + argv[cmd_idx + 1:]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _expand_config(argv, parser)
    except BadPlanFile as exc:
        return _fail(EXIT_PARAM, exc)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
