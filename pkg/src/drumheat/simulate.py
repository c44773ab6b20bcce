"""Monte Carlo estimators for heat contents of stable processes.

The isotropic alpha-stable process is built by subordination: X_t =
sqrt(2 S_t) Z with S the one-sided (alpha/2)-stable subordinator
normalized by E[exp(-lam S_t)] = exp(-t lam^(alpha/2)), so that
E[exp(i xi . X_t)] = exp(-t |xi|^alpha) exactly.  Subordinator draws use
the Kanter transform (one uniform, one exponential), which is exact.

Estimators:
  shc     -- spectral heat content, grid-path survival (over-estimates;
             grid bias is removable by Richardson extrapolation)
  rhc     -- regular heat content, one exact increment (no grid bias)
  skbm_shc -- heat content of the subordinate killed Brownian motion
  interaction_defect -- Q(G) minus the component sum, common random numbers
  survival_prob, sup_tail_check -- path-level diagnostics

Reproducibility: work is split into fixed-size chunks; chunk u draws from
Philox seeded by SeedSequence(entropy=master_seed, spawn_key=(u,)), and
each chunk's draw order is fixed (starts, then per-step variates for all
paths whether alive or not).  Survival tallies are merged as integers in
chunk order, so results are bit-identical for a given master seed.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NoConvergence
from .geometry import (DEPTH_CAP, CantorComplement, Domain, DrumSpec, IFSDrum,
                       apply_similitude, default_membership_depth)
from .geometry import contains as _domain_contains

__all__ = [
    "StableParams",
    "PathScheme",
    "Estimate",
    "SeedPlan",
    "MCConfig",
    "sample_one_sided_stable",
    "sample_isotropic_stable",
    "survival_prob",
    "shc",
    "rhc",
    "skbm_shc",
    "interaction_defect",
    "sup_tail_check",
    "richardson_combine",
    "resolve_depth",
]


# ---------------------------------------------------------------------------
# configuration types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StableParams:
    """Stability index and space dimension; alpha = 2 is excluded."""

    alpha: float
    d: int = 1

    def __post_init__(self):
        if not (0.0 < self.alpha < 2.0):
            raise DomainError(f"alpha must be in (0,2), got {self.alpha:g}")
        if self.d < 1:
            raise DomainError("dimension must be >= 1")


@dataclass(frozen=True)
class PathScheme:
    """Time grid resolution and geometry resolution for path survival.

    membership_depth = None defers the depth choice to each run: grid-kill
    estimators resolve it to default_membership_depth(t, alpha) so that the
    truncated pre-set co-scales with the displacement, while endpoint
    classification (rhc) resolves it to DEPTH_CAP, where truncation is
    nothing but false-kill bias.
    """

    n_steps: int = 64
    membership_depth: int | None = None
    richardson_levels: int = 0

    def __post_init__(self):
        if self.n_steps < 1:
            raise DomainError("n_steps must be >= 1")
        if self.membership_depth is not None and self.membership_depth < 1:
            raise DomainError("membership_depth must be >= 1")
        if self.richardson_levels < 0:
            raise DomainError("richardson_levels must be >= 0")


@dataclass
class Estimate:
    value: float
    stderr: float
    n_samples: int
    master_seed: int
    digest: str
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stderr < 0.0:
            raise DomainError("stderr must be >= 0")

    def __str__(self):
        return (f"{self.value:.10g} +- {self.stderr:.3g} "
                f"(n={self.n_samples}, seed={self.master_seed}, cfg={self.digest})")


@dataclass(frozen=True)
class SeedPlan:
    """Deterministic stream derivation.

    stream(u) = Philox keyed by SeedSequence(entropy=master_seed,
    spawn_key=(u,)).  Chunk size is part of the plan: it fixes the work
    partition, hence the draw sequence, hence the estimates bit for bit.
    """

    master_seed: int
    chunk: int = 1 << 15

    def __post_init__(self):
        if not (0 <= self.master_seed < 1 << 64):
            raise DomainError("master_seed must fit in 64 bits")
        if self.chunk < 1:
            raise DomainError("chunk must be >= 1")

    def stream(self, index: int) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.master_seed, spawn_key=(index,))
        return np.random.Generator(np.random.Philox(ss))

    def chunks(self, n: int):
        """Yield (unit_index, chunk_size) covering n samples."""
        unit, done = 0, 0
        while done < n:
            m = min(self.chunk, n - done)
            yield unit, m
            unit += 1
            done += m


@dataclass(frozen=True)
class MCConfig:
    n_points: int
    scheme: PathScheme
    seeds: SeedPlan

    def __post_init__(self):
        if self.n_points < 1:
            raise DomainError("n_points must be >= 1")


def config_digest(**kw) -> str:
    """Short stable digest of the resolved run configuration."""
    text = ";".join(f"{k}={kw[k]!r}" for k in sorted(kw))
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def resolve_depth(scheme: PathScheme, params: StableParams, t: float,
                  grid_kill: bool) -> int:
    """Membership depth actually used by a run (see PathScheme)."""
    if scheme.membership_depth is not None:
        return scheme.membership_depth
    return default_membership_depth(t, params.alpha) if grid_kill else DEPTH_CAP


# ---------------------------------------------------------------------------
# exact stable sampling
# ---------------------------------------------------------------------------

def _one_sided_std(beta: float, m: int, rng: np.random.Generator) -> np.ndarray:
    """m draws of S_1 with E[exp(-lam S_1)] = exp(-lam^beta), Kanter form.

    S = (A(theta)/W)^((1-beta)/beta), theta = pi U,
    A = sin(beta theta)^(beta/(1-beta)) sin((1-beta) theta)
        / sin(theta)^(1/(1-beta));
    evaluated in logs so theta near 0 or pi stays finite.
    """
    u = rng.random(m)
    w = rng.standard_exponential(m)
    theta = np.pi * u
    c = 1.0 - beta
    with np.errstate(divide="ignore", over="ignore"):
        log_a = (beta / c) * np.log(np.sin(beta * theta)) \
            + np.log(np.sin(c * theta)) \
            - (1.0 / c) * np.log(np.sin(theta))
        s = np.exp((c / beta) * (log_a - np.log(w)))
    return s


def sample_one_sided_stable(beta: float, t: float, rng: np.random.Generator,
                            n: int | None = None):
    """Draws of S_t with E[exp(-lam S_t)] = exp(-t lam^beta).

    Scalar when n is None (one uniform + one exponential consumed), else an
    ndarray of n draws.  Self-similarity: S_t = t^(1/beta) S_1.
    """
    if not (0.0 < beta < 1.0):
        raise DomainError(f"beta must be in (0,1), got {beta:g}")
    if t <= 0.0:
        raise DomainError(f"t must be positive, got {t:g}")
    m = 1 if n is None else int(n)
    s = t ** (1.0 / beta) * _one_sided_std(beta, m, rng)
    return float(s[0]) if n is None else s


def sample_isotropic_stable(params: StableParams, t: float,
                            rng: np.random.Generator, n: int | None = None):
    """Draws of X_t with E[exp(i xi . X_t)] = exp(-t |xi|^alpha).

    X_t = sqrt(2 S_t) Z: the factor 2 matches the Brownian normalization
    E[exp(i xi . W_s)] = exp(-s |xi|^2) assumed by the subordination.
    Returns shape (d,) for scalar calls, (n, d) otherwise (and plain
    scalars/(n,) for d = 1).
    """
    if t <= 0.0:
        raise DomainError(f"t must be positive, got {t:g}")
    m = 1 if n is None else int(n)
    s = sample_one_sided_stable(params.alpha / 2.0, t, rng, m)
    if params.d == 1:
        z = rng.standard_normal(m)
        x = np.sqrt(2.0 * s) * z
        return float(x[0]) if n is None else x
    z = rng.standard_normal((m, params.d))
    x = np.sqrt(2.0 * s)[:, None] * z
    return x[0] if n is None else x


# ---------------------------------------------------------------------------
# path survival engine
# ---------------------------------------------------------------------------

def _draw_starts(domain: Domain, m: int, rng: np.random.Generator, depth: int):
    """Uniform proposals on the domain's cell; returns (points, accept mask).
    Proposals outside the domain are discarded, not resampled."""
    lo, hi, exact = domain.proposal_cell()
    if domain.dim == 1:
        pts = lo[0] + rng.random(m) * (hi[0] - lo[0])
    else:
        pts = lo + rng.random((m, domain.dim)) * (hi - lo)
    if exact:
        return pts, np.ones(m, dtype=bool)
    return pts, np.asarray(domain.contains_many(pts, depth))


def _survival_counts(domain: Domain, params: StableParams, t: float,
                     scheme: PathScheme, depth: int, n: int, seeds: SeedPlan,
                     fixed_start=None, brownian_on_subordinator: bool = False):
    """Grid-path survival tallies at every Richardson level.

    Level j (j = 0..richardson_levels) is the grid with n_steps * 2^(L-j)
    points, so j = L is the requested base grid and j = 0 the finest; all
    levels reuse the same fine path, which nests the survival events
    (finer grid survival implies coarser).  Returns integer counts.
    """
    levels = scheme.richardson_levels
    fine = scheme.n_steps * (1 << levels)
    beta = params.alpha / 2.0
    counts = [0] * (levels + 1)
    n_acc = 0
    for unit, m in seeds.chunks(n):
        rng = seeds.stream(unit)
        if fixed_start is None:
            pos, acc = _draw_starts(domain, m, rng, depth)
        else:
            if domain.dim == 1:
                pos = np.full(m, float(fixed_start))
            else:
                pos = np.tile(np.asarray(fixed_start, dtype=float), (m, 1))
            acc = np.ones(m, dtype=bool)
        pos = pos.copy()
        alive = [acc.copy() for _ in range(levels + 1)]
        if brownian_on_subordinator:
            # horizon of the Brownian grid is S_t, drawn once per path
            s_total = sample_one_sided_stable(beta, t, rng, m)
            step_sd = np.sqrt(2.0 * s_total / fine)
        else:
            h = t / fine
        with np.errstate(invalid="ignore", over="ignore"):
            for step in range(1, fine + 1):
                if brownian_on_subordinator:
                    z = rng.standard_normal(m if domain.dim == 1 else (m, domain.dim))
                    inc = step_sd * z if domain.dim == 1 else step_sd[:, None] * z
                else:
                    s = sample_one_sided_stable(beta, h, rng, m)
                    z = rng.standard_normal(m if domain.dim == 1 else (m, domain.dim))
                    inc = np.sqrt(2.0 * s) * z if domain.dim == 1 \
                        else np.sqrt(2.0 * s)[:, None] * z
                # coarsest-level survivors are the superset: only they move
                upd = alive[-1]
                pos[upd] += inc[upd]
                inside = np.asarray(domain.contains_many(pos, depth))
                for j in range(levels + 1):
                    if step % (1 << j) == 0:
                        alive[j] &= inside
        n_acc += int(acc.sum())
        for j in range(levels + 1):
            counts[j] += int(alive[j].sum())
    return counts, n_acc


def _nested_cov(p: list[float], n: int) -> np.ndarray:
    """Covariance of nested survival indicators: level 0 event is contained
    in every coarser one, so Cov(p_i, p_j) = p_fine (1 - p_coarse) / n."""
    k = len(p)
    cov = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            cov[i, j] = p[min(i, j)] * (1.0 - p[max(i, j)]) / n
    return cov


def richardson_combine(values, cov):
    """Two-step Richardson extrapolation of (finest, mid, coarse) values.

    Bias model value_j = limit + C (2^j h)^q per level j gives
    limit = v0 - d2^2/(d1 - d2) with d2 = v1 - v0, d1 = v2 - v1, and
    q_hat = log2(d1/d2).  Returns (limit, stderr, q_hat, ok); ok is False
    when the differences are noise-dominated or not of one sign, in which
    case (v0, sigma0) is returned unchanged.
    """
    v = np.asarray(values, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if v.shape != (3,) or cov.shape != (3, 3):
        raise DomainError("richardson_combine expects three levels")
    d2 = v[1] - v[0]
    d1 = v[2] - v[1]
    var_d2 = cov[0, 0] + cov[1, 1] - 2 * cov[0, 1]
    var_d1 = cov[1, 1] + cov[2, 2] - 2 * cov[1, 2]
    usable = (d1 * d2 > 0.0
              and abs(d1) > abs(d2)
              and abs(d2) > 2.0 * math.sqrt(max(var_d2, 0.0))
              and abs(d1) > 2.0 * math.sqrt(max(var_d1, 0.0)))
    if not usable:
        return float(v[0]), float(math.sqrt(max(cov[0, 0], 0.0))), float("nan"), False
    u = d2
    w = d1 - d2
    limit = v[0] - u * u / w
    q_hat = math.log2(d1 / d2)
    # delta method: E = a - (b-a)^2/(c - 2b + a)
    g = np.array([
        1.0 + (2 * u * w + u * u) / (w * w),
        -(2 * u * w + 2 * u * u) / (w * w),
        u * u / (w * w),
    ])
    var = float(g @ cov @ g)
    return float(limit), math.sqrt(max(var, 0.0)), float(q_hat), True


def _estimate_from_counts(counts, n_acc, volume, seeds, digest, levels):
    """Build the Estimate: plain binomial at the base grid, or the
    Richardson limit of the three finest levels when levels >= 2."""
    if n_acc == 0:
        raise NoConvergence("no proposal points accepted")
    p = [c / n_acc for c in counts]
    extra = {"level_values": [volume * q for q in p], "n_grid_levels": len(p)}
    if levels >= 2:
        cov = _nested_cov(p[:3], n_acc)
        limit, se, q_hat, ok = richardson_combine(p[:3], cov)
        extra["richardson_q"] = q_hat
        extra["richardson_ok"] = ok
        if not ok:
            extra["richardson_note"] = "noise-dominated; finest grid value used"
        return Estimate(volume * limit, volume * se, n_acc,
                        seeds.master_seed, digest, extra)
    base = p[-1]
    se = math.sqrt(max(base * (1.0 - base), 0.0) / n_acc)
    return Estimate(volume * base, volume * se, n_acc,
                    seeds.master_seed, digest, extra)


# ---------------------------------------------------------------------------
# public estimators
# ---------------------------------------------------------------------------

def survival_prob(domain: Domain, x, params: StableParams, t: float,
                  scheme: PathScheme, n: int, seeds: SeedPlan) -> Estimate:
    """P_x(tau_D > t) on the time grid {k t/n_steps}: fraction of paths from
    x whose every grid position lies in the domain.  Over-estimates the
    continuous-time survival (excursions between grid times are missed);
    the bias shrinks as n_steps grows."""
    if t <= 0.0:
        raise DomainError("t must be positive")
    if n < 1:
        raise DomainError("n must be >= 1")
    depth = resolve_depth(scheme, params, t, grid_kill=True)
    if not _domain_contains(domain, x, depth):
        raise DomainError(f"start point {x!r} is not in the domain")
    digest = config_digest(op="survival_prob", domain=domain.describe(),
                           alpha=params.alpha, d=params.d, t=t, x=repr(x),
                           scheme=(scheme.n_steps, depth,
                                   scheme.richardson_levels),
                           n=n, seed=seeds.master_seed, chunk=seeds.chunk)
    counts, n_acc = _survival_counts(domain, params, t, scheme, depth, n,
                                     seeds, fixed_start=x)
    return _estimate_from_counts(counts, n_acc, 1.0, seeds, digest,
                                 scheme.richardson_levels)


def shc(domain: Domain, params: StableParams, t: float, config: MCConfig) -> Estimate:
    """Spectral heat content Q(t) = integral over D of P_x(tau_D > t).

    Pooled estimator: one path per start, starts uniform on the proposal
    cell (rejected when outside D, except for gap-union domains where the
    cell is exact).  Value = |D| x survival fraction; stderr binomial.
    """
    if t <= 0.0:
        raise DomainError("t must be positive")
    scheme, seeds = config.scheme, config.seeds
    depth = resolve_depth(scheme, params, t, grid_kill=True)
    digest = config_digest(op="shc", domain=domain.describe(),
                           alpha=params.alpha, d=params.d, t=t,
                           scheme=(scheme.n_steps, depth,
                                   scheme.richardson_levels),
                           n=config.n_points, seed=seeds.master_seed,
                           chunk=seeds.chunk)
    counts, n_acc = _survival_counts(domain, params, t, scheme, depth,
                                     config.n_points, seeds)
    vol = domain.sampling_volume(depth)
    est = _estimate_from_counts(counts, n_acc, vol, seeds, digest,
                                scheme.richardson_levels)
    est.extra["depth"] = depth
    return est


def rhc(domain: Domain, params: StableParams, t: float, config: MCConfig) -> Estimate:
    """Regular heat content H(t) = integral over D of P_x(X_t in D).

    One exact increment per start: no time grid, so the only error is
    Monte Carlo noise.  For gap-union domains the number of sampled points
    (starts or endpoints) falling in the unresolved remainder of (0,1) is
    reported in extra['unresolved_hits']; such points are null for the
    exact domain and occur with probability ~ (2/3)^depth.
    """
    if t <= 0.0:
        raise DomainError("t must be positive")
    scheme, seeds = config.scheme, config.seeds
    depth = resolve_depth(scheme, params, t, grid_kill=False)
    digest = config_digest(op="rhc", domain=domain.describe(),
                           alpha=params.alpha, d=params.d, t=t,
                           depth=depth, n=config.n_points,
                           seed=seeds.master_seed, chunk=seeds.chunk)
    is_cantor = isinstance(domain, CantorComplement)
    survived = 0
    n_acc = 0
    hits = 0
    for unit, m in seeds.chunks(config.n_points):
        rng = seeds.stream(unit)
        pos, acc = _draw_starts(domain, m, rng, depth)
        inc = sample_isotropic_stable(params, t, rng, m)
        end = pos + inc
        inside = np.asarray(domain.contains_many(end, depth))
        survived += int(np.sum(inside & acc))
        n_acc += int(acc.sum())
        if is_cantor:
            for pts in (pos, end):
                lev, _ = domain.first_gap_info(pts, depth)
                hits += int(np.sum((lev == 0) & (pts > 0.0) & (pts < 1.0)))
    if n_acc == 0:
        raise NoConvergence("no proposal points accepted")
    p = survived / n_acc
    vol = domain.sampling_volume(depth)
    se = vol * math.sqrt(max(p * (1.0 - p), 0.0) / n_acc)
    extra = {"unresolved_hits": hits} if is_cantor else {}
    return Estimate(vol * p, se, n_acc, seeds.master_seed, digest, extra)


def skbm_shc(domain: Domain, params: StableParams, t: float, config: MCConfig) -> Estimate:
    """Heat content of the subordinate killed Brownian motion.

    Per path: draw the subordinator value S_t once, then run a Brownian
    grid (per-coordinate variance 2 S_t / n_grid) and require every grid
    point inside D.  Same grid over-estimate caveat as shc; Richardson
    levels apply to the Brownian grid.  Fractal domains are accepted but
    flagged: the depth caveat then applies to both the Brownian grid and
    the membership resolution.
    """
    if t <= 0.0:
        raise DomainError("t must be positive")
    if isinstance(domain, (CantorComplement, IFSDrum)) or "gasket" in domain.describe():
        warnings.warn("subordinate killed estimator on a fractal domain: "
                      "grid and membership resolutions both truncate",
                      RuntimeWarning, stacklevel=2)
    scheme, seeds = config.scheme, config.seeds
    depth = resolve_depth(scheme, params, t, grid_kill=True)
    digest = config_digest(op="skbm", domain=domain.describe(),
                           alpha=params.alpha, d=params.d, t=t,
                           scheme=(scheme.n_steps, depth,
                                   scheme.richardson_levels),
                           n=config.n_points, seed=seeds.master_seed,
                           chunk=seeds.chunk)
    counts, n_acc = _survival_counts(domain, params, t, scheme, depth,
                                     config.n_points, seeds,
                                     brownian_on_subordinator=True)
    vol = domain.sampling_volume(depth)
    return _estimate_from_counts(counts, n_acc, vol, seeds, digest,
                                 scheme.richardson_levels)


def _component_of_start_generic(pos, spec: DrumSpec, drum: IFSDrum, depth: int):
    """Component index per start: 0 = generator cell, j >= 1 = R_j(G),
    -1 = none (possible only through finite resolution).  pos is (n,) for
    d = 1 and (n, d) otherwise."""
    n = pos.shape[0]
    pts = pos[:, None] if spec.d == 1 else pos
    comp = np.full(n, -1, dtype=np.int32)
    ing = np.asarray(spec.generator.contains_many(pos, depth))
    comp[ing] = 0
    lo, hi = spec.hull_box()
    for j, s in enumerate(spec.similitudes, start=1):
        pulled = s.inverse(pts)
        flat = pulled[:, 0] if spec.d == 1 else pulled
        in_box = np.all((pulled >= lo - 1e-12) & (pulled <= hi + 1e-12), axis=-1)
        cand = (comp == -1) & in_box
        if cand.any():
            member = np.zeros(n, dtype=bool)
            member[cand] = drum.contains_many(flat[cand], depth)
            comp[member] = j
    return comp


def interaction_defect(spec: DrumSpec, params: StableParams, t: float,
                       config: MCConfig) -> Estimate:
    """Defect D(t) = Q_G(t) - sum_j Q_{R_j G}(t) - Q_{G_0}(t).

    Common random numbers: each path is simulated once; its survival in G
    and in the component of its own start are evaluated on the same
    positions, so the per-path defect indicator is 0 or 1 and the
    difference estimator has tiny variance.  Super-additivity of heat
    content over disjoint unions makes the true value >= 0.

    The middle-thirds drum takes a fast path: the first ternary digit-1
    level of each position identifies both gap-union membership and the
    component (level 1 = generator; deeper = the child whose leading digit
    the point carries), with the depth budget aligned so that depth-K
    membership in G splits exactly into depth-(K-1) membership in the
    children plus the generator.
    """
    if t <= 0.0:
        raise DomainError("t must be positive")
    scheme, seeds = config.scheme, config.seeds
    depth = resolve_depth(scheme, params, t, grid_kill=True)
    digest = config_digest(op="defect", d=spec.d, alpha=params.alpha, t=t,
                           r=tuple(spec.coefficients),
                           scheme=(scheme.n_steps, depth),
                           n=config.n_points, seed=seeds.master_seed,
                           chunk=seeds.chunk)
    beta = params.alpha / 2.0
    n_steps = scheme.n_steps
    h = t / n_steps

    is_cantor = (spec.d == 1 and len(spec.similitudes) == 2
                 and all(abs(s.r - 1.0 / 3.0) < 1e-12 for s in spec.similitudes)
                 and abs(spec.similitudes[0].shift[0]) < 1e-12
                 and abs(spec.similitudes[1].shift[0] - 2.0 / 3.0) < 1e-12)

    defect_sum = 0
    defect_sq = 0
    n_tot = 0
    if is_cantor:
        cantor = CantorComplement()
        for unit, m in seeds.chunks(config.n_points):
            rng = seeds.stream(unit)
            pos = rng.random(m)
            lev0, dig0 = cantor.first_gap_info(pos, depth)
            # component id: 0 generator, 1 left copy, 2 right copy, -1 none
            comp = np.where(lev0 == 1, 0,
                            np.where(lev0 > 1, np.where(dig0 == 0, 1, 2), -1))
            alive_g = lev0 > 0
            alive_c = comp >= 0
            pos = pos.copy()
            with np.errstate(invalid="ignore", over="ignore"):
                for _ in range(n_steps):
                    s = sample_one_sided_stable(beta, h, rng, m)
                    z = rng.standard_normal(m)
                    upd = alive_g
                    pos[upd] += (np.sqrt(2.0 * s) * z)[upd]
                    lev, dig = cantor.first_gap_info(pos, depth)
                    in_g = lev > 0
                    pos_comp = np.where(lev == 1, 0,
                                        np.where(lev > 1, np.where(dig == 0, 1, 2), -1))
                    alive_g &= in_g
                    alive_c &= in_g & (pos_comp == comp)
            diff = alive_g.astype(np.int64) - alive_c.astype(np.int64)
            defect_sum += int(diff.sum())
            defect_sq += int((diff * diff).sum())
            n_tot += m
        vol = 1.0
    else:
        drum = IFSDrum(spec, depth_cap=min(depth, 60))
        components = [spec.generator] + [apply_similitude(s, drum)
                                         for s in spec.similitudes]
        for unit, m in seeds.chunks(config.n_points):
            rng = seeds.stream(unit)
            pos, acc = _draw_starts(drum, m, rng, depth)
            comp = _component_of_start_generic(pos, spec, drum, depth)
            comp[~acc] = -1
            alive_g = acc.copy()
            alive_c = comp >= 0
            pos = pos.copy()
            with np.errstate(invalid="ignore", over="ignore"):
                for _ in range(n_steps):
                    s = sample_one_sided_stable(beta, h, rng, m)
                    if spec.d == 1:
                        z = rng.standard_normal(m)
                        pos[alive_g] += (np.sqrt(2.0 * s) * z)[alive_g]
                    else:
                        z = rng.standard_normal((m, spec.d))
                        pos[alive_g] += (np.sqrt(2.0 * s)[:, None] * z)[alive_g]
                    alive_g &= np.asarray(drum.contains_many(pos, depth))
                    for cid, dom in enumerate(components):
                        sel = alive_c & (comp == cid)
                        if sel.any():
                            alive_c[sel] &= np.asarray(
                                dom.contains_many(pos[sel], depth))
            diff = alive_g.astype(np.int64) - alive_c.astype(np.int64)
            defect_sum += int(diff.sum())
            defect_sq += int((diff * diff).sum())
            n_tot += int(acc.sum())
        vol = drum.sampling_volume(depth)
    if n_tot == 0:
        raise NoConvergence("no proposal points accepted")
    mean = defect_sum / n_tot
    var = max(defect_sq / n_tot - mean * mean, 0.0)
    return Estimate(vol * mean, vol * math.sqrt(var / n_tot), n_tot,
                    seeds.master_seed, digest,
                    {"defect_paths": defect_sum})


def sup_tail_check(params: StableParams, t: float, L: float, n: int,
                   seeds: SeedPlan, n_steps: int = 64) -> Estimate:
    """Grid-sampled P(max_{k} X_{kh}^{(1)} > L): an under-estimate of the
    running-sup exceedance (the sup between grid times is missed).  Used
    for scaling checks: halving L should roughly multiply the frequency by
    2^alpha, doubling t should roughly double it."""
    if L <= 0.0 or t <= 0.0:
        raise DomainError("need L > 0 and t > 0")
    beta = params.alpha / 2.0
    h = t / n_steps
    digest = config_digest(op="sup_tail", alpha=params.alpha, d=params.d,
                           t=t, L=L, n=n, n_steps=n_steps,
                           seed=seeds.master_seed, chunk=seeds.chunk)
    exceed = 0
    n_tot = 0
    for unit, m in seeds.chunks(n):
        rng = seeds.stream(unit)
        pos = np.zeros(m)
        hit = np.zeros(m, dtype=bool)
        for _ in range(n_steps):
            s = sample_one_sided_stable(beta, h, rng, m)
            if params.d == 1:
                z = rng.standard_normal(m)
                pos += np.sqrt(2.0 * s) * z
            else:
                z = rng.standard_normal((m, params.d))
                pos += np.sqrt(2.0 * s) * z[:, 0]
            hit |= pos > L
        exceed += int(hit.sum())
        n_tot += m
    p = exceed / n_tot
    se = math.sqrt(max(p * (1.0 - p), 0.0) / n_tot)
    return Estimate(p, se, n_tot, seeds.master_seed, digest)
