"""Experiment orchestration for heat-content decay studies.

Plans sweep (alpha, t, estimator) cells over a geometric time grid, persist
one JSON line per cell (plus a CSV projection and standalone SVG charts),
and stay resumable: cell seeds are derived by hashing the cell coordinates,
so partial runs continue to byte-identical files.  On top of the records
sit the analysis passes: variance-weighted power-law fits of the deficit,
log-periodic residual extraction with an F-test, the rate comparison table
across estimators, and Richardson extrapolation over step counts.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import (BadPlanFile, DeficitNotResolved, DomainError,
                     GridTooCoarse)
from .geometry import DrumSpec
from .simulate import (Estimate, MCConfig, PathScheme, SeedPlan, StableParams,
                       config_digest, interaction_defect, rhc, richardson_combine,
                       shc, skbm_shc)

__all__ = [
    "ExperimentPlan",
    "RunRecord",
    "FitResult",
    "LogPeriodic",
    "RateRow",
    "RateReport",
    "run_plan",
    "load_records",
    "write_csv",
    "write_decay_svg",
    "fit_power_exponent",
    "log_periodic_extract",
    "compare_rates",
    "richardson_extrapolate",
    "geometric_grid",
]

_ESTIMATORS = ("shc", "rhc", "skbm", "defect")


# ---------------------------------------------------------------------------
# plan and records
# ---------------------------------------------------------------------------

def geometric_grid(t_min: float, t_max: float, points_per_decade: int) -> np.ndarray:
    """Geometric t-grid with the stated density, endpoints included."""
    if not (0.0 < t_min < t_max):
        raise DomainError("need 0 < t_min < t_max")
    decades = math.log10(t_max / t_min)
    n = int(round(points_per_decade * decades)) + 1
    return np.power(10.0, np.linspace(math.log10(t_min), math.log10(t_max), n))


@dataclass(frozen=True)
class ExperimentPlan:
    """One decay experiment: estimators x alphas x geometric t-grid.

    domain is the pointwise-membership object consumed by shc/rhc/skbm;
    drum is the similitude system needed by the defect estimator (and may
    be omitted otherwise).  log_periodic only tightens the grid-density
    validation; extraction itself is a separate analysis pass.
    """

    domain_id: str
    alphas: tuple
    t_min: float
    t_max: float
    points_per_decade: int
    estimators: tuple
    n_points: int
    scheme: PathScheme
    master_seed: int
    out_path: str
    domain: object = None
    drum: DrumSpec | None = None
    log_periodic: bool = False

    def __post_init__(self):
        if not (0.0 < self.t_min < self.t_max):
            raise DomainError("need 0 < t_min < t_max")
        need = 16 if self.log_periodic else 4
        if self.points_per_decade < need:
            raise DomainError(
                f"points_per_decade must be >= {need} "
                f"({'log-periodic extraction requested' if self.log_periodic else 'fitting minimum'})")
        if not self.alphas or any(not 0.0 < a < 2.0 for a in self.alphas):
            raise DomainError("alphas must lie in (0, 2)")
        bad = [e for e in self.estimators if e not in _ESTIMATORS]
        if bad or not self.estimators:
            raise DomainError(f"estimators must be a nonempty subset of {_ESTIMATORS}")
        if "defect" in self.estimators and self.drum is None:
            raise DomainError("the defect estimator needs a drum spec")
        if any(e != "defect" for e in self.estimators) and self.domain is None:
            raise DomainError("pointwise estimators need a domain")
        if self.n_points < 1:
            raise DomainError("n_points must be positive")

    def t_grid(self) -> np.ndarray:
        return geometric_grid(self.t_min, self.t_max, self.points_per_decade)

    def cells(self) -> list:
        return [(float(a), float(t), e)
                for a in self.alphas
                for t in self.t_grid()
                for e in self.estimators]

    def digest(self) -> str:
        return config_digest(
            domain=self.domain_id, alphas=tuple(self.alphas),
            t_min=self.t_min, t_max=self.t_max, ppd=self.points_per_decade,
            estimators=tuple(self.estimators), n_points=self.n_points,
            n_steps=self.scheme.n_steps, depth=self.scheme.membership_depth,
            levels=self.scheme.richardson_levels, seed=self.master_seed)


@dataclass
class RunRecord:
    """One (alpha, t, estimator) cell.  wall_time is informational only and
    never persisted, so re-runs reproduce byte-identical files."""

    domain_id: str
    alpha: float
    t: float
    estimator: str
    value: float | None
    stderr: float | None
    n_samples: int
    seed: int
    digest: str
    error: str | None = None
    extra: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def key(self):
        return (repr(self.alpha), repr(self.t), self.estimator)

    def to_line(self) -> str:
        obj = {
            "domain": self.domain_id, "alpha": self.alpha, "t": self.t,
            "estimator": self.estimator, "value": self.value,
            "stderr": self.stderr, "n": self.n_samples, "seed": self.seed,
            "digest": self.digest,
        }
        if self.error is not None:
            obj["error"] = self.error
        if self.extra:
            obj["extra"] = self.extra
        return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                          allow_nan=False)

    @classmethod
    def from_obj(cls, obj: dict) -> "RunRecord":
        return cls(domain_id=obj["domain"], alpha=obj["alpha"], t=obj["t"],
                   estimator=obj["estimator"], value=obj["value"],
                   stderr=obj["stderr"], n_samples=obj["n"], seed=obj["seed"],
                   digest=obj["digest"], error=obj.get("error"),
                   extra=obj.get("extra", {}))


def _cell_seed(master_seed: int, domain_id: str, alpha: float, t: float,
               estimator: str) -> int:
    text = f"{master_seed}|{domain_id}|{alpha!r}|{t!r}|{estimator}"
    h = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(h[:8], "big") & (2 ** 63 - 1)


def _jsonable_extra(extra: dict) -> dict:
    out = {}
    for k, v in sorted(extra.items()):
        if isinstance(v, (bool, str)):
            out[k] = v
        elif isinstance(v, (int, np.integer)):
            out[k] = int(v)
        elif isinstance(v, (float, np.floating)):
            if math.isfinite(float(v)):
                out[k] = float(v)
        elif isinstance(v, (list, tuple, np.ndarray)):
            vals = [float(x) for x in np.asarray(v).ravel()]
            if all(math.isfinite(x) for x in vals):
                out[k] = vals
    return out


def _run_cell(plan: ExperimentPlan, alpha: float, t: float, estimator: str) -> RunRecord:
    seed = _cell_seed(plan.master_seed, plan.domain_id, alpha, t, estimator)
    digest = config_digest(
        domain=plan.domain_id, alpha=alpha, t=t, estimator=estimator,
        n_points=plan.n_points, n_steps=plan.scheme.n_steps,
        depth=plan.scheme.membership_depth,
        levels=plan.scheme.richardson_levels, seed=seed)
    dim = plan.drum.d if estimator == "defect" else plan.domain.dim
    params = StableParams(alpha, d=dim)
    config = MCConfig(n_points=plan.n_points, scheme=plan.scheme,
                      seeds=SeedPlan(seed))
    start = time.perf_counter()
    try:
        if estimator == "shc":
            est = shc(plan.domain, params, t, config)
        elif estimator == "rhc":
            est = rhc(plan.domain, params, t, config)
        elif estimator == "skbm":
            est = skbm_shc(plan.domain, params, t, config)
        else:
            est = interaction_defect(plan.drum, params, t, config)
    except Exception as exc:  # recorded, not fatal: one bad cell must not kill a sweep
        return RunRecord(plan.domain_id, alpha, t, estimator, None, None,
                         0, seed, digest, error=f"{type(exc).__name__}: {exc}",
                         wall_time=time.perf_counter() - start)
    return RunRecord(plan.domain_id, alpha, t, estimator,
                     float(est.value), float(est.stderr), est.n_samples,
                     seed, digest, extra=_jsonable_extra(est.extra),
                     wall_time=time.perf_counter() - start)


def load_records(path: str) -> list:
    """Parse a record file; returns records in file order."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        try:
            head = json.loads(header)
        except json.JSONDecodeError as exc:
            raise BadPlanFile(f"bad record header in {path}: {exc}") from exc
        if head.get("schema") != 1:
            raise BadPlanFile(f"unsupported record schema in {path}: {head!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(RunRecord.from_obj(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise BadPlanFile(f"{path}:{lineno}: bad record: {exc}") from exc
    return records


def run_plan(plan: ExperimentPlan, workers: int = 1) -> list:
    """Execute all plan cells, appending records incrementally.

    Resumable: cells whose (alpha, t, estimator) already appear in the
    output file with a matching config digest are skipped; a digest
    mismatch means the file belongs to a different plan and is an error.
    Cells may execute concurrently, but records are flushed in canonical
    plan order, so interrupted and restarted runs converge to the same
    bytes as an uninterrupted one.
    """
    cells = plan.cells()
    existing = {}
    plan_digest = plan.digest()
    if os.path.exists(plan.out_path) and os.path.getsize(plan.out_path) > 0:
        with open(plan.out_path, "r", encoding="utf-8") as fh:
            head = json.loads(fh.readline())
        if head.get("plan") != plan_digest:
            raise BadPlanFile(
                f"{plan.out_path} was written by a different plan "
                f"(digest {head.get('plan')!r} != {plan_digest!r})")
        for rec in load_records(plan.out_path):
            existing[rec.key()] = rec
        new_file = False
    else:
        new_file = True

    def cell_key(cell):
        a, t, e = cell
        return (repr(a), repr(t), e)

    pending = [c for c in cells if cell_key(c) not in existing]
    for c in cells:
        rec = existing.get(cell_key(c))
        if rec is not None and rec.digest != config_digest(
                domain=plan.domain_id, alpha=c[0], t=c[1], estimator=c[2],
                n_points=plan.n_points, n_steps=plan.scheme.n_steps,
                depth=plan.scheme.membership_depth,
                levels=plan.scheme.richardson_levels,
                seed=_cell_seed(plan.master_seed, plan.domain_id, *c)):
            raise BadPlanFile(
                f"existing record for cell {c} has a mismatched config digest")

    results = {}
    if pending:
        with open(plan.out_path, "a", encoding="utf-8", newline="\n") as fh:
            if new_file:
                fh.write(json.dumps({"schema": 1, "plan": plan_digest},
                                    sort_keys=True, separators=(",", ":")) + "\n")
                fh.flush()
            if workers > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    futures = {cell_key(c): pool.submit(_run_cell, plan, *c)
                               for c in pending}
                    for c in pending:
                        rec = futures[cell_key(c)].result()
                        fh.write(rec.to_line() + "\n")
                        fh.flush()
                        results[rec.key()] = rec
            else:
                for c in pending:
                    rec = _run_cell(plan, *c)
                    fh.write(rec.to_line() + "\n")
                    fh.flush()
                    results[rec.key()] = rec
    merged = {**existing, **results}
    return [merged[cell_key(c)] for c in cells]


def write_csv(records, path: str) -> None:
    """Flat projection of the records for plotting tools."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# schema=1\n")
        fh.write("domain,alpha,t,estimator,value,stderr,n,seed\n")
        for r in records:
            value = "" if r.value is None else repr(r.value)
            stderr = "" if r.stderr is None else repr(r.stderr)
            fh.write(f"{r.domain_id},{r.alpha!r},{r.t!r},{r.estimator},"
                     f"{value},{stderr},{r.n_samples},{r.seed}\n")


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

@dataclass
class LogPeriodic:
    period: float
    amplitude: float
    phase: float
    significance: float

    def __post_init__(self):
        if not 0.0 <= self.significance <= 1.0:
            raise DomainError("significance must lie in [0, 1]")


@dataclass
class FitResult:
    exponent: float
    amplitude: float
    exponent_stderr: float
    intercept_stderr: float
    n_points: int
    chi2: float
    residuals: np.ndarray
    log_t: np.ndarray
    log_periodic: LogPeriodic | None = None

    def __post_init__(self):
        if not self.exponent_stderr > 0.0:
            raise DomainError("exponent stderr must be positive")


def _deficits(records, volume):
    good = [r for r in records if r.error is None and r.value is not None]
    t = np.array([r.t for r in good])
    val = np.array([r.value for r in good])
    err = np.array([r.stderr for r in good])
    deficit = (volume - val) if volume is not None else val
    return good, t, deficit, err


def fit_power_exponent(records, volume: float | None = None) -> FitResult:
    """Weighted least squares of ln(deficit) on ln(t).

    deficit = volume - value when a volume is given (the exact one, so the
    regression's dependent variable carries no correlated error), else the
    record values directly.  Weights are (deficit/stderr)^2, the inverse
    variance of ln(deficit) to first order; with noiseless records the fit
    degrades to OLS.  Every deficit must clear zero by 2 stderr.
    """
    good, t, deficit, err = _deficits(records, volume)
    if len(good) < 4:
        raise DomainError(f"need >= 4 usable records, got {len(good)}")
    if np.any(deficit <= 2.0 * err) or np.any(deficit <= 0.0):
        k = int(np.argmin(deficit / np.maximum(err, 1e-300)))
        raise DeficitNotResolved(
            f"deficit at t={t[k]:g} is {deficit[k]:.3g} +- {err[k]:.3g}, "
            "within 2 stderr of zero; raise the MC budget or t")
    x = np.log(t)
    y = np.log(deficit)
    noiseless = np.all(err == 0.0)
    w = np.ones_like(y) if noiseless else (deficit / err) ** 2
    X = np.column_stack([np.ones_like(x), x])
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    beta = cov @ (XtW @ y)
    resid = y - X @ beta
    chi2 = float(np.sum(w * resid ** 2))
    if noiseless:
        # no variance information: scale covariance by residual scatter
        s2 = chi2 / max(len(y) - 2, 1)
        cov = cov * max(s2, 1e-30)
    se_int = math.sqrt(max(cov[0, 0], 0.0)) or 1e-15
    se_slope = math.sqrt(max(cov[1, 1], 0.0)) or 1e-15
    return FitResult(exponent=float(beta[1]), amplitude=float(math.exp(beta[0])),
                     exponent_stderr=se_slope, intercept_stderr=se_int,
                     n_points=len(y), chi2=chi2, residuals=resid, log_t=x)


def log_periodic_extract(records, expected_period: float,
                         volume: float | None = None) -> LogPeriodic:
    """Sin/cos regression of the power-law residuals with a period scan.

    Removes the fitted power law, then for each trial period over +-30% of
    the expected one regresses the ln-deficit residuals on
    {1, sin(2 pi x/P), cos(2 pi x/P)} with the fit weights, keeping the
    period with the smallest weighted SSE.  Significance is the F-test
    CDF of the best three-parameter model against the constant model,
    Sidak-corrected for the size of the period scan (choosing the best of
    many trial periods inflates the raw F statistic even under the null;
    the correction over-counts because neighbouring periods are
    correlated, so the reported significance is conservative).
    Needs >= 8 grid points per expected period in ln t.
    """
    fit = fit_power_exponent(records, volume)
    x = fit.log_t
    spacing = float(np.median(np.diff(np.sort(x))))
    if expected_period / spacing < 8.0 - 1e-9:
        raise GridTooCoarse(
            f"{expected_period / spacing:.1f} points per period; need >= 8")
    good, t, deficit, err = _deficits(records, volume)
    w = np.ones_like(deficit) if np.all(err == 0.0) else (deficit / err) ** 2
    r = fit.residuals
    best = None
    scan = np.linspace(0.7, 1.3, 241) * expected_period
    for period in scan:
        arg = 2.0 * math.pi * x / period
        X = np.column_stack([np.ones_like(x), np.sin(arg), np.cos(arg)])
        XtW = X.T * w
        try:
            beta = np.linalg.solve(XtW @ X, XtW @ r)
        except np.linalg.LinAlgError:
            continue
        sse = float(np.sum(w * (r - X @ beta) ** 2))
        if best is None or sse < best[0]:
            best = (sse, period, beta)
    if best is None:
        raise GridTooCoarse("period scan produced no solvable design")
    sse1, period, beta = best
    mean = float(np.sum(w * r) / np.sum(w))
    sse0 = float(np.sum(w * (r - mean) ** 2))
    dof = len(x) - 3
    if dof <= 0 or sse1 <= 0.0:
        significance = 0.0
    else:
        F = max((sse0 - sse1) / 2.0, 0.0) / (sse1 / dof)
        p = float(stats.f.sf(F, 2, dof))
        p_corrected = -math.expm1(len(scan) * math.log1p(-min(p, 1.0 - 1e-16)))
        significance = 1.0 - min(max(p_corrected, 0.0), 1.0)
    amplitude = float(math.hypot(beta[1], beta[2]))
    phase = float(math.atan2(beta[2], beta[1]))
    return LogPeriodic(period=float(period), amplitude=amplitude,
                       phase=phase, significance=significance)


# ---------------------------------------------------------------------------
# rate comparison
# ---------------------------------------------------------------------------

@dataclass
class RateRow:
    estimator: str
    alpha: float
    exponent: float
    ci_lo: float
    ci_hi: float
    predicted: float | None
    log_factor: bool
    excluded: bool


@dataclass
class RateReport:
    d: int
    boundary_dim: float
    rows: list

    def lines(self) -> list:
        out = [f"rate comparison (d={self.d}, boundary dim={self.boundary_dim:.6g})",
               f"{'estimator':>9} {'alpha':>6} {'fitted':>9} "
               f"{'95% CI':>19} {'predicted':>9}  notes"]
        for r in self.rows:
            pred = "-" if r.predicted is None else f"{r.predicted:9.4f}"
            notes = []
            if r.log_factor:
                notes.append("log factor expected")
            if r.excluded:
                notes.append("CI EXCLUDES prediction")
            out.append(f"{r.estimator:>9} {r.alpha:6.3f} {r.exponent:9.4f} "
                       f"[{r.ci_lo:8.4f},{r.ci_hi:8.4f}] {pred:>9}  "
                       + ("; ".join(notes)))
        return out


def _predicted_exponent(estimator: str, alpha: float, d: int,
                        boundary_dim: float):
    """(exponent, log_factor) the asymptotics predict for the deficit.

    shc: (d-b)/alpha in the regime b > d - alpha, else plain t.
    rhc: 1/alpha above alpha=1, t ln(1/t) at alpha=1, t below.
    skbm: same exponents as shc except the boundary case alpha = d-b,
    where a log factor appears (the headline contrast with shc).
    """
    gap = d - boundary_dim
    tol = 1e-12
    if estimator == "shc":
        if gap < alpha < 2.0:
            return gap / alpha, False
        return 1.0, False
    if estimator == "rhc":
        if abs(alpha - 1.0) <= tol:
            return 1.0, True
        return (1.0 / alpha, False) if alpha > 1.0 else (1.0, False)
    if estimator == "skbm":
        if abs(alpha - gap) <= tol:
            return 1.0, True
        if gap < alpha < 2.0:
            return gap / alpha, False
        return 1.0, False
    return None, False


def compare_rates(fits, d: int, boundary_dim: float) -> RateReport:
    """Tabulate fitted exponents against the predicted decay rates.

    fits: iterable of (estimator, alpha, FitResult), reported in input
    order, one row each.  A row is flagged when its 95% CI excludes the
    prediction.
    """
    rows = []
    for estimator, alpha, fit in fits:
        pred, log_factor = _predicted_exponent(estimator, alpha, d, boundary_dim)
        lo = fit.exponent - 1.96 * fit.exponent_stderr
        hi = fit.exponent + 1.96 * fit.exponent_stderr
        excluded = pred is not None and not (lo <= pred <= hi)
        rows.append(RateRow(estimator, float(alpha), fit.exponent, lo, hi,
                            pred, log_factor, excluded))
    return RateReport(d=d, boundary_dim=boundary_dim, rows=rows)


# ---------------------------------------------------------------------------
# extrapolation over step counts
# ---------------------------------------------------------------------------

def richardson_extrapolate(coarse: Estimate, mid: Estimate,
                           fine: Estimate) -> Estimate:
    """Extrapolate three independent estimates at steps h, h/2, h/4.

    Fits value(h) = limit + C h^q through the three points.  When the
    level differences are noise-dominated (or not monotone of one sign)
    the finest estimate is returned instead, with its stderr inflated by
    the last level difference as a bias allowance and
    extra['noise_dominates'] set.
    """
    values = [fine.value, mid.value, coarse.value]
    cov = np.diag([fine.stderr ** 2, mid.stderr ** 2, coarse.stderr ** 2])
    limit, stderr, q_hat, ok = richardson_combine(values, cov)
    digest = config_digest(op="richardson3",
                           parts=(coarse.digest, mid.digest, fine.digest))
    if not ok:
        d2 = mid.value - fine.value
        return Estimate(value=fine.value,
                        stderr=float(math.hypot(fine.stderr, d2)),
                        n_samples=fine.n_samples,
                        master_seed=fine.master_seed, digest=digest,
                        extra={"noise_dominates": True})
    return Estimate(value=float(limit), stderr=float(stderr),
                    n_samples=fine.n_samples, master_seed=fine.master_seed,
                    digest=digest,
                    extra={"noise_dominates": False, "richardson_q": float(q_hat)})


# ---------------------------------------------------------------------------
# SVG output
# ---------------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


class _Panel:
    """Maps data coordinates into one SVG viewport rectangle."""

    def __init__(self, x0, y0, w, h, xlim, ylim):
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.xlim, self.ylim = xlim, ylim

    def px(self, x):
        a, b = self.xlim
        return self.x0 + (x - a) / (b - a or 1.0) * self.w

    def py(self, y):
        a, b = self.ylim
        return self.y0 + self.h - (y - a) / (b - a or 1.0) * self.h


def _ticks(lo, hi, n=5):
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo == hi:
        return [lo]
    raw = np.linspace(lo, hi, n)
    return [float(v) for v in raw]


def _panel_frame(parts, panel, xlabel, ylabel):
    parts.append(f'<rect x="{panel.x0}" y="{panel.y0}" width="{panel.w}" '
                 f'height="{panel.h}" fill="none" stroke="#333"/>')
    for tx in _ticks(*panel.xlim):
        px = panel.px(tx)
        parts.append(f'<line x1="{px:.1f}" y1="{panel.y0 + panel.h}" '
                     f'x2="{px:.1f}" y2="{panel.y0 + panel.h + 4}" stroke="#333"/>')
        parts.append(f'<text x="{px:.1f}" y="{panel.y0 + panel.h + 16}" '
                     f'font-size="10" text-anchor="middle">{tx:.3g}</text>')
    for ty in _ticks(*panel.ylim):
        py = panel.py(ty)
        parts.append(f'<line x1="{panel.x0 - 4}" y1="{py:.1f}" '
                     f'x2="{panel.x0}" y2="{py:.1f}" stroke="#333"/>')
        parts.append(f'<text x="{panel.x0 - 6}" y="{py + 3:.1f}" font-size="10" '
                     f'text-anchor="end">{ty:.3g}</text>')
    parts.append(f'<text x="{panel.x0 + panel.w / 2:.1f}" '
                 f'y="{panel.y0 + panel.h + 30}" font-size="11" '
                 f'text-anchor="middle">{xlabel}</text>')
    parts.append(f'<text x="{panel.x0 - 44}" y="{panel.y0 + panel.h / 2:.1f}" '
                 f'font-size="11" text-anchor="middle" '
                 f'transform="rotate(-90 {panel.x0 - 44} {panel.y0 + panel.h / 2:.1f})"'
                 f'>{ylabel}</text>')


def write_decay_svg(series, path: str, title: str = "") -> None:
    """Standalone two-panel SVG: log-log deficit curves with error bars on
    top, fit residuals against ln t underneath.

    series: list of dicts with keys label, t (array), deficit (array),
    stderr (array), and optionally fit (a FitResult for the residual
    panel).
    """
    plot = []
    for s in series:
        t = np.asarray(s["t"], float)
        de = np.asarray(s["deficit"], float)
        se = np.asarray(s["stderr"], float)
        keep = (de > 0) & np.isfinite(de)
        plot.append((s["label"], t[keep], de[keep], se[keep], s.get("fit")))
    xs = np.concatenate([np.log10(p[1]) for p in plot if p[1].size]) \
        if any(p[1].size for p in plot) else np.array([0.0, 1.0])
    ys = np.concatenate([np.log10(p[2]) for p in plot if p[2].size]) \
        if any(p[2].size for p in plot) else np.array([0.0, 1.0])
    pad = lambda a: (float(a.min()) - 0.05 * (np.ptp(a) or 1.0),
                     float(a.max()) + 0.05 * (np.ptp(a) or 1.0))
    width, height = 640, 640
    top = _Panel(70, 40, width - 100, 280, pad(xs), pad(ys))
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             '<rect width="100%" height="100%" fill="white"/>']
    if title:
        parts.append(f'<text x="{width / 2}" y="22" font-size="13" '
                     f'text-anchor="middle">{title}</text>')
    _panel_frame(parts, top, "log10 t", "log10 deficit")
    legend_y = top.y0 + 12
    rx = []
    ry = []
    for i, (label, t, de, se, fit) in enumerate(plot):
        color = _PALETTE[i % len(_PALETTE)]
        if t.size:
            pts = " ".join(f"{top.px(math.log10(tt)):.1f},"
                           f"{top.py(math.log10(dd)):.1f}"
                           for tt, dd in zip(t, de))
            parts.append(f'<polyline points="{pts}" fill="none" '
                         f'stroke="{color}" stroke-width="1.2"/>')
            for tt, dd, ss in zip(t, de, se):
                if ss <= 0 or dd - ss <= 0:
                    continue
                x = top.px(math.log10(tt))
                parts.append(f'<line x1="{x:.1f}" y1="{top.py(math.log10(dd - ss)):.1f}" '
                             f'x2="{x:.1f}" y2="{top.py(math.log10(dd + ss)):.1f}" '
                             f'stroke="{color}" stroke-width="0.8"/>')
        parts.append(f'<text x="{top.x0 + top.w - 6}" y="{legend_y}" font-size="10" '
                     f'text-anchor="end" fill="{color}">{label}</text>')
        legend_y += 13
        if fit is not None:
            rx.append(fit.log_t)
            ry.append(fit.residuals)
    if rx:
        rxa, rya = np.concatenate(rx), np.concatenate(ry)
        bot = _Panel(70, 390, width - 100, 180, pad(rxa), pad(rya))
        _panel_frame(parts, bot, "ln t", "fit residual")
        zero = bot.py(0.0)
        if bot.ylim[0] <= 0.0 <= bot.ylim[1]:
            parts.append(f'<line x1="{bot.x0}" y1="{zero:.1f}" '
                         f'x2="{bot.x0 + bot.w}" y2="{zero:.1f}" '
                         f'stroke="#bbb" stroke-dasharray="4 3"/>')
        j = 0
        for i, (label, t, de, se, fit) in enumerate(plot):
            if fit is None:
                continue
            color = _PALETTE[i % len(_PALETTE)]
            for xv, yv in zip(fit.log_t, fit.residuals):
                parts.append(f'<circle cx="{bot.px(xv):.1f}" cy="{bot.py(yv):.1f}" '
                             f'r="2" fill="{color}"/>')
            j += 1
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")
