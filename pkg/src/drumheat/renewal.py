"""Finite-measure renewal equations f = Lf + phi.

L f(z) = sum_j c_j f(z - gamma_j) with positive weights summing to one and
positive shifts.  The module classifies the shift set as arithmetic or
non-arithmetic, solves the equation by Neumann iteration on a grid for
exponentially decaying forcings, and evaluates the two limit formulas:
a constant (integral of phi over the mean shift) in the non-arithmetic
case and a span-periodic lattice sum otherwise.  On top of these sit the
drum-specific constant C1 and the log-periodic amplitude profile.

Arithmetic detection is operational, not a proof: all floats are rational,
so any shift set is commensurable at machine scale.  We run a tolerant
Euclid to continued-fraction depth 64 and additionally demand that the
implied integer multipliers stay below 10^6; tiny spans with astronomical
multipliers (what Euclid finds for, say, ln 2 and ln 3) are classified as
non-arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import (ConstraintViolated, DomainError, GridTooCoarse,
                     InsufficientRange, NoConvergence)
from .geometry import DrumSpec

__all__ = [
    "RenewalEquation",
    "SpanResult",
    "ForcingFunction",
    "GridFn",
    "SolveResult",
    "detect_arithmetic",
    "default_grid",
    "apply_L",
    "solve_series",
    "asymptote_nonarithmetic",
    "asymptote_arithmetic",
    "c1_constant",
    "amplitude_function",
    "drum_shift_weights",
    "MULTIPLIER_CAP",
]

MULTIPLIER_CAP = 10 ** 6
_CF_DEPTH = 64


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RenewalEquation:
    """Weights and shifts of L.  Duplicate shifts (within 1e-12 relative)
    are merged at construction with their weights summed, so N = 1 with
    c_1 = 1 is the legal form of 'all shifts equal'."""

    weights: tuple
    shifts: tuple

    def __post_init__(self):
        c = np.asarray(self.weights, dtype=float)
        g = np.asarray(self.shifts, dtype=float)
        if c.shape != g.shape or c.ndim != 1 or c.size == 0:
            raise ConstraintViolated("weights and shifts must match, nonempty")
        if np.any(c <= 0.0) or np.any(g <= 0.0):
            raise ConstraintViolated("weights and shifts must be positive")
        order = np.argsort(g)
        c, g = c[order], g[order]
        scale = g[-1]
        merged_c, merged_g = [c[0]], [g[0]]
        for wi, gi in zip(c[1:], g[1:]):
            if abs(gi - merged_g[-1]) <= 1e-12 * scale:
                merged_c[-1] += wi
            else:
                merged_c.append(wi)
                merged_g.append(gi)
        if abs(sum(merged_c) - 1.0) > 1e-12:
            raise ConstraintViolated(
                f"weights must sum to 1, got {sum(merged_c)!r}")
        object.__setattr__(self, "weights", tuple(float(x) for x in merged_c))
        object.__setattr__(self, "shifts", tuple(float(x) for x in merged_g))

    @property
    def mean_shift(self) -> float:
        return float(sum(c * g for c, g in zip(self.weights, self.shifts)))


@dataclass(frozen=True)
class SpanResult:
    arithmetic: bool
    span: float | None = None
    certificate: tuple = ()

    def __post_init__(self):
        if self.arithmetic:
            if self.span is None or not self.span > 0.0:
                raise ConstraintViolated("arithmetic result needs a positive span")
            if not self.certificate:
                raise ConstraintViolated("arithmetic result needs multipliers")
            g = 0
            for m in self.certificate:
                g = math.gcd(g, m)
            if g != 1:
                raise ConstraintViolated("certificate multipliers must have gcd 1")


@dataclass(frozen=True)
class ForcingFunction:
    """phi with a two-sided decay certificate |phi(z)| <= c1 exp(-c2 |z|).

    The certificate is the caller's claim; construction spot-checks it on a
    grid (tolerating 1%) and the solvers use it to bound truncated tails.
    """

    fn: object
    c1: float
    c2: float

    def __post_init__(self):
        if self.c1 < 0.0 or self.c2 <= 0.0:
            raise ConstraintViolated("need c1 >= 0 and c2 > 0")
        zmax = min(60.0 / self.c2, 700.0)
        zs = np.linspace(-zmax, zmax, 201)
        vals = np.abs(self(zs))
        bound = 1.01 * self.c1 * np.exp(-self.c2 * np.abs(zs)) + 1e-300
        if np.any(vals > bound):
            k = int(np.argmax(vals - bound))
            raise ConstraintViolated(
                f"decay certificate violated at z={zs[k]:.3g}: "
                f"|phi|={vals[k]:.3g} > {bound[k]:.3g}")

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        out = np.asarray(self.fn(z), dtype=float)
        return out

    def tail_terms(self, period: float, tol: float) -> int:
        """Number of lattice terms on each side so the discarded tail of
        sum_k phi(z - k*period) is below tol (geometric bound)."""
        denom = -math.expm1(-self.c2 * period)
        k = math.log(max(self.c1, 1e-300) / (tol * denom)) / (self.c2 * period)
        return max(int(math.ceil(k)) + 2, 4)


@dataclass
class GridFn:
    """Function samples on the uniform grid z0 + h*arange(n)."""

    z0: float
    h: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.h <= 0.0 or self.values.ndim != 1 or self.values.size < 8:
            raise DomainError("grid needs h > 0 and at least 8 samples")

    @property
    def z(self) -> np.ndarray:
        return self.z0 + self.h * np.arange(self.values.size)

    def copy(self) -> "GridFn":
        return GridFn(self.z0, self.h, self.values.copy())


@dataclass
class SolveResult:
    f: GridFn
    n_iter: int
    residual_sup: float
    tail_bound: float


# ---------------------------------------------------------------------------
# span detection
# ---------------------------------------------------------------------------

def detect_arithmetic(shifts, tol: float = 1e-9) -> SpanResult:
    """Tolerant real gcd of the shifts.

    Euclid with absolute cutoff tol*max(shifts), capped at continued-
    fraction depth 64.  A candidate gcd is accepted only if every shift is
    an integer multiple within tol (relative) AND the multipliers stay
    below MULTIPLIER_CAP; otherwise the set is declared non-arithmetic.
    The multiplier bound is what keeps incommensurable pairs like
    (ln 2, ln 3) out: floats are always commensurable at scale ~1e-9, but
    only with meaninglessly large multipliers.  Scale-equivariant:
    detect(lam*shifts) has span lam*span.
    """
    g = np.asarray(shifts, dtype=float)
    if g.size == 0 or np.any(g <= 0.0):
        raise DomainError("shifts must be positive")
    scale = float(g.max())
    cutoff = tol * scale

    def gcd_pair(a: float, b: float) -> float | None:
        for _ in range(_CF_DEPTH):
            if b < cutoff:
                return a
            a, b = b, a - math.floor(a / b) * b
        return None

    acc = float(g[0])
    for v in g[1:]:
        acc = gcd_pair(max(acc, float(v)), min(acc, float(v)))
        if acc is None or acc < cutoff:
            return SpanResult(False)
    mult = [int(round(float(v) / acc)) for v in g]
    if any(m < 1 or m > MULTIPLIER_CAP for m in mult):
        return SpanResult(False)
    if any(abs(float(v) - m * acc) > tol * float(v) for v, m in zip(g, mult)):
        return SpanResult(False)
    common = mult[0]
    for m in mult[1:]:
        common = math.gcd(common, m)
    span = acc * common
    mult = [m // common for m in mult]
    return SpanResult(True, span, tuple(mult))


# ---------------------------------------------------------------------------
# the operator and the series solver
# ---------------------------------------------------------------------------

def _diff4_bulk(values: np.ndarray) -> float:
    """90th percentile of |Delta^4| over active cells.  The bulk quantile
    (rather than the sup) is deliberate: an isolated kink, e.g. exp(-|z|)
    at the origin, produces O(h) fourth differences in ~4 cells forever,
    yet its interpolation error is localized and vanishes under
    refinement.  Only widespread large differences mean the grid is
    genuinely too coarse."""
    if values.size < 5:
        return 0.0
    d4 = np.abs(np.diff(values, n=4))
    active = d4[d4 > 1e-300]
    if active.size == 0:
        return 0.0
    return float(np.quantile(active, 0.9))


def _shift_interp(fn: GridFn, gamma: float) -> np.ndarray:
    """Samples of z -> f(z - gamma) on fn's grid, cubic 4-point Lagrange;
    values left of the grid use the decaying-boundary limit 0."""
    n = fn.values.size
    off = gamma / fn.h
    k = math.floor(off)
    s = off - k
    if s > 1.0 - 1e-13:
        k, s = k + 1, 0.0
    v = fn.values
    if s < 1e-13:          # shift is a whole number of grid cells
        out = np.zeros(n)
        if k < n:
            out[k:] = v[: n - k] if k > 0 else v
        return out
    # f(z_i - gamma) needs source position i - k - s: Lagrange stencil at
    # nodes i-k-2 .. i-k+1, weights from expanding the basis at distance s
    w = np.array([
        -s * (1.0 - s) * (1.0 + s) / 6.0,
        s * (2.0 - s) * (1.0 + s) / 2.0,
        (2.0 - s) * (1.0 - s) * (1.0 + s) / 2.0,
        -s * (2.0 - s) * (1.0 - s) / 6.0,
    ])
    padded = np.concatenate([np.zeros(3), v])
    out = np.zeros(n)
    idx = np.arange(n) - k
    for j in range(4):
        src = idx + j + 1   # padded coords of original node i-k-2+j
        take = np.where((src >= 0) & (src < n + 3),
                        padded[np.clip(src, 0, n + 2)], 0.0)
        out += w[j] * take
    return out


def apply_L(eq: RenewalEquation, fn: GridFn) -> GridFn:
    """(Lf)(z) = sum_j c_j f(z - gamma_j) on f's own grid.

    Off-grid shifts use cubic interpolation; values left of the grid are 0
    (the decaying boundary).  The interpolation error is estimated from
    bulk fourth differences (cubic error <= |Delta^4 f|/16), relative to
    the sup of f, and must stay below 1e-8.
    """
    sup = float(np.max(np.abs(fn.values)))
    est = _diff4_bulk(fn.values) / 16.0 / max(sup, 1e-300)
    if est > 1e-8:
        raise GridTooCoarse(
            f"relative interpolation error estimate {est:.3g} exceeds 1e-8")
    out = np.zeros_like(fn.values)
    for c, gmm in zip(eq.weights, eq.shifts):
        out += c * _shift_interp(fn, gmm)
    return GridFn(fn.z0, fn.h, out)


def default_grid(eq: RenewalEquation, z_min: float, z_max: float,
                 span: float | None = None) -> tuple[float, float, int]:
    """(z0, h, n) with spacing span/64 when a span is given, else
    min(shifts)/64: one period (or shortest shift) resolved by 64 cells."""
    h = (span if span else min(eq.shifts)) / 64.0
    n = int(math.ceil((z_max - z_min) / h)) + 1
    return z_min, h, n


def _interior_slice(eq: RenewalEquation, fn: GridFn) -> slice:
    k = int(math.ceil(max(eq.shifts) / fn.h)) + 3
    return slice(k, fn.values.size)


def solve_series(eq: RenewalEquation, phi: ForcingFunction, grid,
                 tol: float = 1e-10) -> SolveResult:
    """Neumann series f = sum_n L^n phi on the grid, iterated as
    f <- Lf + phi until the sup increment drops below tol.

    The n-th Neumann term lives where z - n*min(shifts) is moderate, so on
    a bounded grid the increments die off exponentially once n*min(shifts)
    clears the right edge; tail_bound records the last increment.  The
    residual ||f - Lf - phi||_inf is reported on the interior (z0 + max
    shift onward), where the left-boundary zeros cannot contaminate the
    interpolation.
    """
    if isinstance(grid, GridFn):
        z0, h, n = grid.z0, grid.h, grid.values.size
    else:
        z0, h, n = grid
    zs = z0 + h * np.arange(n)
    phi_grid = phi(zs)
    sup_phi = float(np.max(np.abs(phi_grid)))
    margin = min(int(math.ceil(max(eq.shifts) / h)) + 4, n)
    # a non-negligible phi at the left edge would be chopped to 0 by the
    # shift, seeding jump images at z0 + (every shift word) that poison
    # the whole grid; insist the window starts deep in phi's left tail
    if sup_phi > 0.0 and \
            float(np.max(np.abs(phi_grid[:margin]))) > 1e-7 * sup_phi:
        raise DomainError(
            "phi is not negligible on the left margin of the grid "
            "(needs |phi| <= 1e-7 sup|phi| there); extend z0 to the left")
    f = GridFn(z0, h, phi_grid.copy())
    budget = 10 ** 5
    increment = np.inf
    it = 0
    while increment > tol:
        it += 1
        if it > budget:
            raise NoConvergence(
                f"renewal iteration exhausted {budget} steps "
                f"(last increment {increment:.3g})")
        nxt = apply_L(eq, f)
        nxt.values += phi_grid
        increment = float(np.max(np.abs(nxt.values - f.values)))
        f = nxt
    res = apply_L(eq, f)
    res.values += phi_grid
    interior = _interior_slice(eq, f)
    residual = float(np.max(np.abs(res.values[interior] - f.values[interior]))) \
        if f.values[interior].size else 0.0
    return SolveResult(f, it, residual, increment)


# ---------------------------------------------------------------------------
# limit formulas
# ---------------------------------------------------------------------------

def asymptote_nonarithmetic(eq: RenewalEquation, phi: ForcingFunction) -> float:
    """lim_{z->inf} f(z) = (sum c_j gamma_j)^(-1) int phi for non-arithmetic
    shift sets.  The cut at 60/c2 leaves an analytic tail below 1e-25 c1/c2."""
    cut = 60.0 / phi.c2
    val, _ = integrate.quad(lambda z: float(phi(z)), -cut, cut,
                            limit=400, epsabs=1e-12, epsrel=1e-10)
    return val / eq.mean_shift


def asymptote_arithmetic(eq: RenewalEquation, phi: ForcingFunction,
                         span: float, tol: float = 1e-12):
    """Span-periodic limit: sampler z -> (span/mean shift) *
    sum_{k in Z} phi(z - k*span), truncated by the decay certificate."""
    if span <= 0.0:
        raise DomainError("span must be positive")
    mu = eq.mean_shift
    n_terms = phi.tail_terms(span, tol)

    def sampler(z):
        z = np.asarray(z, dtype=float)
        base = np.round(z / span)
        total = np.zeros_like(z)
        for k in range(-n_terms, n_terms + 1):
            total += phi(z - (base + k) * span)
        return (span / mu) * total

    z_test = np.array([0.0, 0.37 * span, 5.0])
    drift = np.max(np.abs(sampler(z_test + span) - sampler(z_test)))
    if drift > max(100.0 * tol, 1e-10):
        raise NoConvergence(f"lattice sum not periodic to tolerance: {drift:.3g}")
    return sampler


# ---------------------------------------------------------------------------
# drum constants
# ---------------------------------------------------------------------------

def drum_shift_weights(drum: DrumSpec, alpha: float) -> float:
    """Denominator sum_j r_j^b ln(1/r_j^alpha) with b the drum dimension."""
    b = drum.dimension
    return float(sum(r ** b * alpha * math.log(1.0 / r)
                     for r in drum.coefficients))


def _fit_exp_tail(z: np.ndarray, vals: np.ndarray, right: bool) -> tuple[float, float]:
    """Least-squares ln|v| ~ a + b z on an edge window; returns (edge value,
    decay rate towards the relevant infinity), rate <= 0 meaning no decay."""
    take = slice(-5, None) if right else slice(None, 5)
    zz, vv = z[take], np.abs(vals[take])
    pos = vv > 0.0
    if pos.sum() < 3:
        return 0.0, math.inf
    coef = np.polyfit(zz[pos], np.log(vv[pos]), 1)
    slope = coef[0]
    rate = -slope if right else slope
    edge = vv[-1] if right else vv[0]
    return float(edge), float(rate)


def c1_constant(u_samples, r_samples, drum: DrumSpec, alpha: float) -> float:
    """C1 = int_0^inf R(u) du/u / sum_j r_j^b ln(1/r_j^alpha), from samples
    of R on a geometric u-grid.

    With z = ln(1/u) the integral is int R(e^{-z}) dz: trapezoid over the
    sampled window plus exponential tails fitted to the five edge samples
    on each side.  InsufficientRange when the fitted tails carry more than
    5% of the total.
    """
    u = np.asarray(u_samples, dtype=float)
    r = np.asarray(r_samples, dtype=float)
    if u.shape != r.shape or u.ndim != 1 or u.size < 8:
        raise DomainError("need matching 1-d sample arrays, >= 8 points")
    if np.any(u <= 0.0):
        raise DomainError("u samples must be positive")
    z = np.log(1.0 / u)
    order = np.argsort(z)
    z, r = z[order], r[order]
    if np.all(np.abs(r) < 1e-300):
        return 0.0
    body = float(np.trapezoid(r, z))
    edge_r, rate_r = _fit_exp_tail(z, r, right=True)
    edge_l, rate_l = _fit_exp_tail(z, r, right=False)
    tail = 0.0
    for edge, rate in ((edge_r, rate_r), (edge_l, rate_l)):
        if math.isfinite(rate) and rate > 1e-12:
            tail += edge / rate
        elif edge > 0.0:
            raise InsufficientRange(
                "edge samples do not decay; extend the sampling range")
    total = body + tail
    if total != 0.0 and tail > 0.05 * abs(total):
        raise InsufficientRange(
            f"fitted tails carry {tail / abs(total):.1%} of the integral "
            "(> 5%); extend the u-range")
    return total / drum_shift_weights(drum, alpha)


def amplitude_function(phi: ForcingFunction, rho: float, alpha: float,
                       drum: DrumSpec, tol: float = 1e-12):
    """Log-periodic amplitude f(z) = (alpha rho / sum_j r_j^b ln(1/r_j^alpha))
    * sum_n phi(z - n alpha rho), with phi(w) the profile R(e^{-w}).

    The result is (alpha rho)-periodic by construction; periodicity is
    asserted at build time to the truncation tolerance.
    """
    if rho <= 0.0 or alpha <= 0.0:
        raise DomainError("need rho > 0 and alpha > 0")
    period = alpha * rho
    denom = drum_shift_weights(drum, alpha)
    n_terms = phi.tail_terms(period, tol)

    def sampler(z):
        z = np.asarray(z, dtype=float)
        base = np.round(z / period)
        total = np.zeros_like(z)
        for k in range(-n_terms, n_terms + 1):
            total += phi(z - (base + k) * period)
        return (period / denom) * total

    z_test = np.array([0.0, 0.31 * period, 1.7])
    drift = np.max(np.abs(sampler(z_test + period) - sampler(z_test)))
    if drift > max(100.0 * tol, 1e-9):
        raise NoConvergence(f"amplitude not periodic to tolerance: {drift:.3g}")
    return sampler
