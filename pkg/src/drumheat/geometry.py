"""Fractal drums and reference domains.

Domains answer three queries: membership (at a finite resolution depth for
the fractal variants), distance to the complement, and volume.  Drums are
built from similitude systems; the interior Minkowski dimension is the
root of sum r_j^b = 1.

Membership for the middle-thirds gap union is exact: the ternary digits of
the query point (a dyadic rational) are extracted with integer arithmetic,
so no floating-point expansion of 3^K ever appears.  Depth is capped at 45
digits, past which double precision carries no geometric information.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import BadPlanFile, ConstraintViolated, DomainError

__all__ = [
    "Similitude",
    "DrumSpec",
    "Domain",
    "Interval",
    "IntervalUnion",
    "CantorComplement",
    "GasketComplement",
    "Disk",
    "Triangle",
    "IFSDrum",
    "AffineImage",
    "solve_dimension",
    "contains",
    "dist_to_complement",
    "volume",
    "validate_drum",
    "apply_similitude",
    "cantor_gaps",
    "cantor_first_one",
    "default_membership_depth",
    "cantor_drum",
    "gasket_drum",
    "load_drum_spec",
    "DEPTH_CAP",
]

DEPTH_CAP = 45


# ---------------------------------------------------------------------------
# similitudes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Similitude:
    """x -> r * (M x) + shift with M orthogonal and 0 < r < 1."""

    r: float
    matrix: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        s = np.atleast_1d(np.asarray(self.shift, dtype=float))
        if not (0.0 < self.r < 1.0):
            raise ConstraintViolated(f"similitude ratio must be in (0,1), got {self.r:g}")
        if m.shape[0] != m.shape[1] or m.shape[0] != s.shape[0]:
            raise ConstraintViolated("matrix/shift dimensions disagree")
        if not np.allclose(m.T @ m, np.eye(m.shape[0]), atol=1e-12):
            raise ConstraintViolated("matrix is not orthogonal to 1e-12")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "shift", s)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def line(cls, r: float, shift: float, flip: bool = False) -> "Similitude":
        return cls(r, np.array([[-1.0 if flip else 1.0]]), np.array([float(shift)]))

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.r * (x @ self.matrix.T) + self.shift

    def inverse(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return ((y - self.shift) / self.r) @ self.matrix


# ---------------------------------------------------------------------------
# dimension solver
# ---------------------------------------------------------------------------

def _check_standing(coefficients, d: int) -> tuple[float, float]:
    r = np.asarray(coefficients, dtype=float)
    if r.size == 0 or np.any(r <= 0.0) or np.any(r >= 1.0):
        raise ConstraintViolated("coefficients must lie in (0, 1)")
    lo = float(np.sum(r ** d))
    hi = float(np.sum(r ** (d - 1)))
    if not (lo < 1.0 < hi):
        raise ConstraintViolated(
            f"need sum r^d < 1 < sum r^(d-1), got sum r^{d} = {lo:g}, "
            f"sum r^{d-1} = {hi:g}")
    return lo, hi


def solve_dimension(coefficients, d: int) -> float:
    """Unique b in (d-1, d) with sum_j r_j^b = 1, by bisection.

    The map b -> sum r_j^b is strictly decreasing, so the standing
    assumption sum r^d < 1 < sum r^(d-1) brackets the root.  Bisection to
    machine width, then one Newton polish; residual <= 1e-14.
    """
    _check_standing(coefficients, d)
    r = np.asarray(coefficients, dtype=float)
    lo, hi = float(d - 1), float(d)

    def f(b):
        return float(np.sum(r ** b)) - 1.0

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    b = 0.5 * (lo + hi)
    # Newton polish in extended precision; double-precision evaluation
    # noise near the root is ~1 ulp of b, which is visible in printed
    # values, so the last steps run in longdouble before rounding back.
    rl = r.astype(np.longdouble)
    bl = np.longdouble(b)
    for _ in range(3):
        fb = np.sum(rl ** bl) - np.longdouble(1.0)
        dfb = np.sum(rl ** bl * np.log(rl))
        if dfb != 0.0:
            bl = bl - fb / dfb
    b = float(bl)
    if abs(f(b)) > 1e-14:
        raise ConstraintViolated(f"dimension solve residual {f(b):.3g} too large")
    return b


# ---------------------------------------------------------------------------
# exact ternary digits
# ---------------------------------------------------------------------------

_CHUNK = 13                    # ternary digits per 64-bit pass
_CHUNK_BASE = 3 ** _CHUNK      # 1594323 < 2^21
_M42 = np.uint64((1 << 42) - 1)


@lru_cache(maxsize=1)
def _first_one_lut() -> np.ndarray:
    """For v < 3^13: index (0-based, most significant first) of the first
    ternary digit equal to 1, or 13 when none."""
    v = np.arange(_CHUNK_BASE, dtype=np.int64)
    pos = np.full(_CHUNK_BASE, _CHUNK, dtype=np.int8)
    for i in range(_CHUNK):
        digit = (v // 3 ** (_CHUNK - 1 - i)) % 3
        hit = (pos == _CHUNK) & (digit == 1)
        pos[hit] = i
    return pos


def _shift_lanes_left(l2, l1, l0, k: np.ndarray):
    """Shift the 126-bit (3 x 42-bit lanes) values left by k in [0, 41]."""
    k = k.astype(np.uint64)
    keep = np.uint64(42) - k
    # mask first so the subsequent shift cannot overflow 64 bits
    low_mask = (np.uint64(1) << keep) - np.uint64(1)
    c0 = np.where(keep < 42, l0 >> keep, 0)
    c1 = np.where(keep < 42, l1 >> keep, 0)
    l0 = (l0 & low_mask) << k
    l1 = ((l1 & low_mask) << k) | c0
    l2 = ((l2 & low_mask) << k) | c1
    return l2, l1, l0


def cantor_first_one(x: np.ndarray, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Position of the first ternary digit 1 of each x, searched to `depth`.

    Returns (level, first_digit): level is 1-based, 0 when no digit 1
    occurs within `depth` digits or x is outside (0, 1); first_digit is the
    leading ternary digit (arbitrary 0 for points outside (0,1)).  Exact
    for every double: the mantissa is treated as the integer it is.
    """
    depth = int(min(depth, DEPTH_CAP))
    if depth < 1:
        raise DomainError("depth must be >= 1")
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    # x = mant * 2^e with mant in [0.5, 1); represent x * 2^126 in 3 lanes
    mant, e = np.frexp(np.where(inside, x, 0.5))
    m = (mant * 2.0 ** 53).astype(np.uint64)        # exact 53-bit integer
    sh = 73 + e                                      # total left shift
    tiny = sh < 0                                    # x < 2^-73: no 1-digit in range
    sh = np.maximum(sh, 0)
    l0 = m & _M42
    l1 = m >> np.uint64(42)
    l2 = np.zeros_like(l0)
    l2, l1, l0 = _shift_lanes_left(l2, l1, l0, np.minimum(sh, 41))
    rem = np.maximum(sh - 41, 0)
    l2, l1, l0 = _shift_lanes_left(l2, l1, l0, rem.astype(np.int64))

    lut = _first_one_lut()
    c_mul = np.uint64(_CHUNK_BASE)
    level = np.zeros(x.shape, dtype=np.int16)
    first_digit = np.zeros(x.shape, dtype=np.int8)
    n_iter = -(-depth // _CHUNK)
    for it in range(n_iter):
        p0 = l0 * c_mul
        p1 = l1 * c_mul
        p2 = l2 * c_mul
        l0 = p0 & _M42
        p1 = p1 + (p0 >> np.uint64(42))
        l1 = p1 & _M42
        p2 = p2 + (p1 >> np.uint64(42))
        l2 = p2 & _M42
        chunk = (p2 >> np.uint64(42)).astype(np.int64)   # next 13 digits
        if it == 0:
            first_digit = (chunk // 3 ** (_CHUNK - 1)).astype(np.int8)
        pos = lut[chunk]
        cand = it * _CHUNK + pos.astype(np.int16) + 1
        hit = (level == 0) & (pos < _CHUNK)
        level = np.where(hit, cand, level)
    level = np.where(level > depth, 0, level)
    level = np.where(inside & ~tiny, level, 0)
    return level, first_digit


def _ternary_digits_exact(x: float, n: int) -> list[int]:
    """First n ternary digits of x in (0,1), by exact rational arithmetic."""
    num, den = Fraction(x).as_integer_ratio() if isinstance(x, Fraction) else float(x).as_integer_ratio()
    digits = []
    for _ in range(n):
        num *= 3
        d, num = divmod(num, den)
        digits.append(int(d))
    return digits


def cantor_gaps(depth: int) -> np.ndarray:
    """All 2^depth - 1 removed middle-third intervals up to `depth`, sorted."""
    if not (1 <= depth <= 20):
        raise DomainError("gap enumeration supported for depth in [1, 20]")
    gaps = [(1.0 / 3.0, 2.0 / 3.0)]
    segs = [(0.0, 1.0 / 3.0), (2.0 / 3.0, 1.0)]
    for _ in range(depth - 1):
        nxt = []
        for a, b in segs:
            w = (b - a) / 3.0
            gaps.append((a + w, a + 2.0 * w))
            nxt.append((a, a + w))
            nxt.append((a + 2.0 * w, b))
        segs = nxt
    return np.array(sorted(gaps))


def default_membership_depth(t: float, alpha: float, contraction: float = 1.0 / 3.0,
                             margin: int = 5) -> int:
    """Depth resolving gaps below the typical displacement t^(1/alpha).

    ceil(log(1/t^(1/alpha)) / log(1/contraction)) + margin, clamped to
    [1, DEPTH_CAP].  Unresolved gaps are then a factor contraction^margin
    narrower than the displacement scale, so kills happen in resolved gaps.
    Crucially the depth must co-scale with t: the unresolved pre-set at
    depth K has measure (2 contraction)^K, and with K tied to t^(1/alpha)
    that measure tracks the fractal boundary layer itself, so small-time
    survival fits see the boundary channel instead of truncating it away.
    A fixed deep K hides the layer entirely from grid-time membership
    checks (the limit set is null).  Boundary-blind estimators that only
    classify the endpoint are the opposite case: there truncation is pure
    false-kill bias ~ (2/3)^K, so just use DEPTH_CAP.
    """
    if t <= 0.0 or not (0.0 < alpha < 2.0):
        raise DomainError("need t > 0 and alpha in (0,2)")
    scale = t ** (1.0 / alpha)
    k = math.ceil(math.log(1.0 / scale) / math.log(1.0 / contraction)) + margin
    return int(min(max(k, 1), DEPTH_CAP))


# ---------------------------------------------------------------------------
# domain variants
# ---------------------------------------------------------------------------

class Domain:
    """Common interface: membership, distance to complement, volume."""

    dim: int = 1

    def contains_many(self, x: np.ndarray, depth: int = DEPTH_CAP) -> np.ndarray:
        raise NotImplementedError

    def dist_many(self, x: np.ndarray, depth: int = DEPTH_CAP) -> np.ndarray:
        raise NotImplementedError

    def volume(self) -> float:
        raise NotImplementedError

    def sampling_volume(self, depth: int) -> float:
        """Volume of the depth-resolved set the rejection sampler actually
        draws from; equals volume() unless truncation matters."""
        return self.volume()

    def proposal_cell(self) -> tuple[np.ndarray, np.ndarray, bool]:
        """(lo, hi, exact): uniform-proposal box; exact means every proposal
        counts as inside (no rejection)."""
        raise NotImplementedError

    def describe(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class Interval(Domain):
    a: float
    b: float

    def __post_init__(self):
        if not self.b > self.a:
            raise DomainError(f"need b > a, got ({self.a:g}, {self.b:g})")

    dim = 1

    def contains_many(self, x, depth: int = DEPTH_CAP):
        x = np.asarray(x, dtype=float)
        return (x > self.a) & (x < self.b)

    def dist_many(self, x, depth: int = DEPTH_CAP):
        x = np.asarray(x, dtype=float)
        return np.maximum(np.minimum(x - self.a, self.b - x), 0.0)

    def volume(self) -> float:
        return self.b - self.a

    def proposal_cell(self):
        return np.array([self.a]), np.array([self.b]), True

    def describe(self) -> str:
        return f"interval({self.a:g},{self.b:g})"


@dataclass(frozen=True)
class IntervalUnion(Domain):
    intervals: tuple

    dim = 1

    def __post_init__(self):
        iv = np.asarray([(float(a), float(b)) for a, b in self.intervals])
        if iv.ndim != 2 or iv.shape[0] == 0:
            raise DomainError("need at least one interval")
        iv = iv[np.argsort(iv[:, 0])]
        if np.any(iv[:, 1] <= iv[:, 0]):
            raise DomainError("each interval needs b > a")
        if np.any(iv[1:, 0] < iv[:-1, 1]):
            raise DomainError("intervals overlap")
        object.__setattr__(self, "intervals", tuple(map(tuple, iv)))

    @property
    def _edges(self) -> np.ndarray:
        return np.asarray(self.intervals, dtype=float).ravel()

    def contains_many(self, x, depth: int = DEPTH_CAP):
        x = np.asarray(x, dtype=float)
        # strictly inside an (a,b) iff the insertion index is odd; side
        # 'left' keeps both endpoints outside
        idx = np.searchsorted(self._edges, x, side="left")
        inside = (idx % 2) == 1
        return inside & ~np.isin(x, self._edges[1::2])

    def dist_many(self, x, depth: int = DEPTH_CAP):
        x = np.asarray(x, dtype=float)
        edges = self._edges
        idx = np.searchsorted(edges, x, side="right")
        inside = (idx % 2) == 1
        lo = edges[np.clip(idx - 1, 0, len(edges) - 1)]
        hi = edges[np.clip(idx, 0, len(edges) - 1)]
        return np.where(inside, np.minimum(x - lo, hi - x), 0.0)

    def volume(self) -> float:
        iv = np.asarray(self.intervals)
        return float(np.sum(iv[:, 1] - iv[:, 0]))

    def proposal_cell(self):
        iv = np.asarray(self.intervals)
        return np.array([iv[0, 0]]), np.array([iv[-1, 1]]), False

    def describe(self) -> str:
        parts = ";".join(f"{a:g},{b:g}" for a, b in self.intervals)
        return f"union({parts})"


@dataclass(frozen=True)
class CantorComplement(Domain):
    """Union of the removed middle thirds of [0,1], resolved to depth_cap.

    Membership at depth K is the level-K gap union: x belongs iff its exact
    ternary expansion shows a digit 1 within the first K digits.  The gap
    union increases with K; its closure fills [0,1], so volume() = 1.
    """

    depth_cap: int = DEPTH_CAP

    dim = 1

    def __post_init__(self):
        if not (1 <= self.depth_cap <= DEPTH_CAP):
            raise DomainError(f"depth_cap must be in [1, {DEPTH_CAP}]")

    def _depth(self, depth: int) -> int:
        return min(int(depth), self.depth_cap)

    def contains_many(self, x, depth: int = DEPTH_CAP):
        level, _ = cantor_first_one(np.asarray(x, dtype=float), self._depth(depth))
        return level > 0

    def first_gap_info(self, x, depth: int = DEPTH_CAP):
        """(level, first_digit) of the first ternary 1; level 0 = not in the
        depth-resolved gap union.  Used by the component-defect estimator."""
        return cantor_first_one(np.asarray(x, dtype=float), self._depth(depth))

    def dist_many(self, x, depth: int = DEPTH_CAP):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        flat = x.ravel()
        res = out.ravel()
        k = self._depth(depth)
        for i, xi in enumerate(flat):
            if not (0.0 < xi < 1.0):
                continue
            digits = _ternary_digits_exact(xi, k)
            try:
                pos = digits.index(1)
            except ValueError:
                continue
            a = Fraction(0)
            for j in range(pos):
                a += Fraction(digits[j], 3 ** (j + 1))
            a += Fraction(1, 3 ** (pos + 1))
            b = a + Fraction(1, 3 ** (pos + 1))
            res[i] = min(xi - float(a), float(b) - xi)
        return out

    def volume(self) -> float:
        return 1.0

    def proposal_cell(self):
        # the Cantor set is null: uniform on (0,1) is uniform on the domain
        return np.array([0.0]), np.array([1.0]), True

    def describe(self) -> str:
        return f"cantor(depth_cap={self.depth_cap})"


@dataclass(frozen=True)
class Disk(Domain):
    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise DomainError("radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains_many(self, x, depth: int = DEPTH_CAP):
        x = np.asarray(x, dtype=float)
        d2 = np.sum((x - np.asarray(self.center)) ** 2, axis=-1)
        return d2 < self.radius ** 2

    def dist_many(self, x, depth: int = DEPTH_CAP):
        x = np.asarray(x, dtype=float)
        d = np.sqrt(np.sum((x - np.asarray(self.center)) ** 2, axis=-1))
        return np.maximum(self.radius - d, 0.0)

    def volume(self) -> float:
        d = self.dim
        return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0) * self.radius ** d

    def proposal_cell(self):
        c = np.asarray(self.center)
        r = self.radius
        return c - r, c + r, False

    def describe(self) -> str:
        c = ",".join(f"{v:g}" for v in self.center)
        return f"disk({c};r={self.radius:g})"


@dataclass(frozen=True)
class Triangle(Domain):
    """Open triangle, used as a d=2 generator cell."""

    vertices: tuple

    dim = 2

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.shape != (3, 2):
            raise DomainError("triangle needs three 2-D vertices")
        area2 = (v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1]) - \
                (v[2, 0] - v[0, 0]) * (v[1, 1] - v[0, 1])
        if abs(area2) < 1e-300:
            raise DomainError("degenerate triangle")
        object.__setattr__(self, "vertices", tuple(map(tuple, v)))

    def contains_many(self, x, depth: int = DEPTH_CAP):
        x = np.asarray(x, dtype=float)
        v = np.asarray(self.vertices)
        sign = None
        ok = np.ones(x.shape[:-1], dtype=bool)
        for i in range(3):
            p, q = v[i], v[(i + 1) % 3]
            cross = (q[0] - p[0]) * (x[..., 1] - p[1]) - (q[1] - p[1]) * (x[..., 0] - p[0])
            s = cross > 0
            if sign is None:
                sign = s
            ok &= (s == sign) & (cross != 0)
        return ok

    def dist_many(self, x, depth: int = DEPTH_CAP):
        x = np.asarray(x, dtype=float)
        v = np.asarray(self.vertices)
        inside = self.contains_many(x, depth)
        dmin = np.full(x.shape[:-1], np.inf)
        for i in range(3):
            p, q = v[i], v[(i + 1) % 3]
            e = q - p
            tpar = np.clip(((x - p) @ e) / (e @ e), 0.0, 1.0)
            proj = p + tpar[..., None] * e
            dmin = np.minimum(dmin, np.sqrt(np.sum((x - proj) ** 2, axis=-1)))
        return np.where(inside, dmin, 0.0)

    def volume(self) -> float:
        v = np.asarray(self.vertices)
        return abs((v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1])
                   - (v[2, 0] - v[0, 0]) * (v[1, 1] - v[0, 1])) / 2.0

    def proposal_cell(self):
        v = np.asarray(self.vertices)
        return v.min(axis=0), v.max(axis=0), False

    def describe(self) -> str:
        return "triangle"


# rounded-corner bookkeeping for the modified gasket
_CORNER_AREA = 3.0 * math.sqrt(3.0) - math.pi  # removed area / radius^2, 3 corners


@dataclass(frozen=True)
class GasketComplement(Domain):
    """Union of the removed central triangles of the Sierpinski gasket on
    the unit triangle (0,0), (1,0), (1/2, sqrt(3)/2).

    corner_radius > 0 selects the modified drum: each removed triangle has
    its three corners rounded by inscribed arcs; the radius at construction
    level k is corner_radius * 2^(1-k), i.e. corner_radius at the first
    (largest) removed triangle, halving with each level.
    """

    depth_cap: int = 30
    corner_radius: float = 0.0

    dim = 2

    # largest radius with the three arcs disjoint inside the level-1 cell
    _EPS_MAX = 0.125

    def __post_init__(self):
        if not (1 <= self.depth_cap <= 45):
            raise DomainError("depth_cap must be in [1, 45]")
        if self.corner_radius < 0.0 or self.corner_radius > self._EPS_MAX:
            raise DomainError(
                f"corner_radius must be in [0, {self._EPS_MAX}]")

    def _descend(self, x, depth: int):
        """Simplex-coordinate descent.  Returns (level, a, b): level of the
        removed triangle containing each point (0 = none within depth), and
        the local simplex coordinates at that level."""
        depth = min(int(depth), self.depth_cap)
        x = np.asarray(x, dtype=float)
        px, py = x[..., 0], x[..., 1]
        a = px - py / math.sqrt(3.0)
        b = 2.0 * py / math.sqrt(3.0)
        alive = (a > 0.0) & (b > 0.0) & (a + b < 1.0)
        level = np.zeros(px.shape, dtype=np.int16)
        # local coordinates frozen at the frame where the point went central
        fa = np.zeros_like(a)
        fb = np.zeros_like(b)
        for k in range(1, depth + 1):
            c1 = alive & (a >= 0.5)
            c2 = alive & (b >= 0.5)
            central = alive & ~c1 & ~c2 & (a + b > 0.5)
            level = np.where(central, np.int16(k), level)
            fa = np.where(central, a, fa)
            fb = np.where(central, b, fb)
            alive = alive & ~central
            a = np.where(c1, 2.0 * a - 1.0, 2.0 * a)
            b = np.where(c2, 2.0 * b - 1.0, 2.0 * b)
        return level, fa, fb

    # central down-triangle corners in the local physical frame
    _P = (np.array([0.5, 0.0]),
          np.array([0.25, math.sqrt(3.0) / 4.0]),
          np.array([0.75, math.sqrt(3.0) / 4.0]))
    # unit bisector directions into the down-triangle
    _E = (np.array([0.0, 1.0]),
          np.array([math.sqrt(3.0) / 2.0, -0.5]),
          np.array([-math.sqrt(3.0) / 2.0, -0.5]))

    def _corner_excluded(self, a, b):
        """Rounding test in the local frame (radius is scale-free there)."""
        r = self.corner_radius
        # local physical coordinates
        lx = a + 0.5 * b
        ly = (math.sqrt(3.0) / 2.0) * b
        excluded = np.zeros(np.shape(lx), dtype=bool)
        for p, e in zip(self._P, self._E):
            sx = lx - p[0]
            sy = ly - p[1]
            s = sx * e[0] + sy * e[1]
            cx = sx - 2.0 * r * e[0]
            cy = sy - 2.0 * r * e[1]
            outside_arc = cx * cx + cy * cy >= r * r
            excluded |= (s <= 1.5 * r) & outside_arc
        return excluded

    def contains_many(self, x, depth: int = 45):
        level, a, b = self._descend(x, depth)
        inside = level > 0
        if self.corner_radius > 0.0:
            inside &= ~self._corner_excluded(a, b)
        return inside

    def dist_many(self, x, depth: int = 45):
        level, a, b = self._descend(x, depth)
        lx = a + 0.5 * b
        ly = (math.sqrt(3.0) / 2.0) * b
        # distance to the down-triangle edges in the local frame
        v = np.stack(self._P)
        dmin = np.full(np.shape(lx), np.inf)
        pt = np.stack([lx, ly], axis=-1)
        for i in range(3):
            p, q = v[i], v[(i + 1) % 3]
            e = q - p
            tpar = np.clip(((pt - p) @ e) / (e @ e), 0.0, 1.0)
            proj = p + tpar[..., None] * e
            dmin = np.minimum(dmin, np.sqrt(np.sum((pt - proj) ** 2, axis=-1)))
        r = self.corner_radius
        if r > 0.0:
            for p, e in zip(self._P, self._E):
                s = (lx - p[0]) * e[0] + (ly - p[1]) * e[1]
                cd = np.sqrt((lx - p[0] - 2 * r * e[0]) ** 2 + (ly - p[1] - 2 * r * e[1]) ** 2)
                dmin = np.where(s <= 1.5 * r, np.minimum(dmin, r - cd), dmin)
            dmin = np.maximum(dmin, 0.0)
        # rescale to the global frame: level-k cell is 2^(1-k) of the frame
        phys = dmin * 2.0 ** (1.0 - level.astype(float))
        inside = level > 0
        if r > 0.0:
            inside &= ~self._corner_excluded(a, b)
        return np.where(inside, phys, 0.0)

    def volume(self) -> float:
        return math.sqrt(3.0) / 4.0 - 4.0 * _CORNER_AREA * self.corner_radius ** 2

    def sampling_volume(self, depth: int) -> float:
        k = min(int(depth), self.depth_cap)
        shrink = 1.0 - 0.75 ** k
        return shrink * (math.sqrt(3.0) / 4.0 - 4.0 * _CORNER_AREA * self.corner_radius ** 2)

    def proposal_cell(self):
        return np.array([0.0, 0.0]), np.array([1.0, math.sqrt(3.0) / 2.0]), False

    def describe(self) -> str:
        return f"gasket(depth_cap={self.depth_cap},eps={self.corner_radius:g})"


@dataclass(frozen=True)
class AffineImage(Domain):
    """Image R(D) of a domain under a similitude; queries map back."""

    map: Similitude
    inner: Domain

    @property
    def dim(self) -> int:
        return self.inner.dim

    def _pull(self, x):
        x = np.asarray(x, dtype=float)
        if self.inner.dim == 1 and x.ndim >= 1 and (x.ndim == 1 or x.shape[-1] != 1):
            y = self.map.inverse(x[..., None])[..., 0]
        else:
            y = self.map.inverse(x)
        return y

    def contains_many(self, x, depth: int = DEPTH_CAP):
        return self.inner.contains_many(self._pull(x), depth)

    def dist_many(self, x, depth: int = DEPTH_CAP):
        return self.map.r * self.inner.dist_many(self._pull(x), depth)

    def volume(self) -> float:
        return self.map.r ** self.inner.dim * self.inner.volume()

    def sampling_volume(self, depth: int) -> float:
        return self.map.r ** self.inner.dim * self.inner.sampling_volume(depth)

    def proposal_cell(self):
        lo, hi, exact = self.inner.proposal_cell()
        corners = np.stack([lo, hi])
        if self.inner.dim == 1:
            mapped = self.map.apply(corners.reshape(-1, 1)).ravel()
            return (np.array([mapped.min()]), np.array([mapped.max()]),
                    exact)
        # map all box corners, rebox
        dims = len(lo)
        pts = np.array(np.meshgrid(*[[lo[i], hi[i]] for i in range(dims)])).T.reshape(-1, dims)
        mapped = self.map.apply(pts)
        return mapped.min(axis=0), mapped.max(axis=0), False

    def describe(self) -> str:
        return f"image({self.inner.describe()})"


# ---------------------------------------------------------------------------
# drums
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DrumSpec:
    """G = (union_j R_j G) u G_0 with derived interior Minkowski dimension."""

    similitudes: tuple
    generator: Domain
    d: int

    def __post_init__(self):
        sims = tuple(self.similitudes)
        if not sims:
            raise ConstraintViolated("need at least one similitude")
        for s in sims:
            if s.dim != self.d:
                raise ConstraintViolated("similitude dimension mismatch")
        if self.generator.dim != self.d:
            raise ConstraintViolated("generator dimension mismatch")
        _check_standing([s.r for s in sims], self.d)
        object.__setattr__(self, "similitudes", sims)

    @property
    def coefficients(self) -> tuple:
        return tuple(s.r for s in self.similitudes)

    @property
    def dimension(self) -> float:
        return solve_dimension(self.coefficients, self.d)

    def hull_box(self, iterations: int = 200) -> tuple[np.ndarray, np.ndarray]:
        """Bounding box of the attractor-with-generator, by fixed-point
        iteration of box -> bbox(union_j R_j box, generator box)."""
        lo, hi, _ = self.generator.proposal_cell()
        lo = lo.copy()
        hi = hi.copy()
        for _ in range(iterations):
            nlo, nhi = lo.copy(), hi.copy()
            for s in self.similitudes:
                dims = len(lo)
                pts = np.array(np.meshgrid(*[[lo[i], hi[i]] for i in range(dims)])).T.reshape(-1, dims)
                mapped = s.apply(pts)
                nlo = np.minimum(nlo, mapped.min(axis=0))
                nhi = np.maximum(nhi, mapped.max(axis=0))
            if np.allclose(nlo, lo, atol=1e-15) and np.allclose(nhi, hi, atol=1e-15):
                break
            lo, hi = nlo, nhi
        return lo, hi


@dataclass(frozen=True)
class IFSDrum(Domain):
    """Drum built from a DrumSpec, resolved to depth_cap construction levels."""

    spec: DrumSpec
    depth_cap: int = 30

    @property
    def dim(self) -> int:
        return self.spec.d

    def __post_init__(self):
        if not (1 <= self.depth_cap <= 60):
            raise DomainError("depth_cap must be in [1, 60]")

    def contains_many(self, x, depth: int = DEPTH_CAP):
        depth = min(int(depth), self.depth_cap)
        x = np.atleast_2d(np.asarray(x, dtype=float)) if self.dim > 1 else np.asarray(x, dtype=float)
        pts = x if self.dim > 1 else x[..., None]
        pts = pts.reshape(-1, self.dim).copy()
        n = pts.shape[0]
        out = np.zeros(n, dtype=bool)
        active = np.ones(n, dtype=bool)
        lo, hi = self.spec.hull_box()
        # stage k tests the level-(k+1) generator copies; depth stages total
        for _ in range(depth):
            if not active.any():
                break
            idx = np.where(active)[0]
            sub = pts[idx]
            ing = self.spec.generator.contains_many(sub if self.dim > 1 else sub[:, 0], depth)
            out[idx[ing]] = True
            active[idx[ing]] = False
            idx = np.where(active)[0]
            if idx.size == 0:
                break
            sub = pts[idx]
            assigned = np.zeros(idx.size, dtype=bool)
            for s in self.spec.similitudes:
                pulled = s.inverse(sub)
                inhull = np.all((pulled >= lo - 1e-12) & (pulled <= hi + 1e-12), axis=-1)
                take = inhull & ~assigned
                pts[idx[take]] = pulled[take]
                assigned |= take
            dead = idx[~assigned]
            active[dead] = False
        shape = x.shape if self.dim > 1 else np.asarray(x).shape
        return out.reshape(shape[:-1] if self.dim > 1 else shape)

    def dist_many(self, x, depth: int = DEPTH_CAP):
        raise DomainError("distance query not supported for generic drums")

    def volume(self) -> float:
        s = sum(r ** self.spec.d for r in self.spec.coefficients)
        if s >= 1.0:
            raise ConstraintViolated("sum r^d >= 1: closed-form volume invalid")
        return self.spec.generator.volume() / (1.0 - s)

    def sampling_volume(self, depth: int) -> float:
        s = sum(r ** self.spec.d for r in self.spec.coefficients)
        k = min(int(depth), self.depth_cap)
        return self.spec.generator.volume() * (1.0 - s ** (k + 1)) / (1.0 - s)

    def proposal_cell(self):
        lo, hi = self.spec.hull_box()
        return lo, hi, False

    def describe(self) -> str:
        return f"ifsdrum(N={len(self.spec.similitudes)},d={self.spec.d})"


# ---------------------------------------------------------------------------
# module-level operation wrappers
# ---------------------------------------------------------------------------

def contains(domain: Domain, x, depth: int = DEPTH_CAP) -> bool:
    """Scalar membership query."""
    arr = np.asarray(x, dtype=float)
    if domain.dim > 1:
        res = domain.contains_many(arr.reshape(1, -1), depth)
        return bool(np.asarray(res).ravel()[0])
    return bool(np.asarray(domain.contains_many(np.atleast_1d(arr), depth)).ravel()[0])


def dist_to_complement(domain: Domain, x, depth: int = DEPTH_CAP) -> float:
    """Scalar distance to the complement; 0 outside the domain."""
    arr = np.asarray(x, dtype=float)
    if domain.dim > 1:
        res = domain.dist_many(arr.reshape(1, -1), depth)
    else:
        res = domain.dist_many(np.atleast_1d(arr), depth)
    return float(np.asarray(res).ravel()[0])


def volume(domain: Domain) -> float:
    return domain.volume()


def apply_similitude(R: Similitude, domain: Domain) -> Domain:
    """Image domain R(D); interval and disk variants stay closed-form."""
    if isinstance(domain, Interval):
        ends = R.apply(np.array([[domain.a], [domain.b]])).ravel()
        return Interval(float(ends.min()), float(ends.max()))
    if isinstance(domain, IntervalUnion):
        mapped = []
        for a, b in domain.intervals:
            ends = R.apply(np.array([[a], [b]])).ravel()
            mapped.append((float(ends.min()), float(ends.max())))
        return IntervalUnion(tuple(mapped))
    if isinstance(domain, Disk):
        c = R.apply(np.asarray(domain.center))
        return Disk(tuple(np.atleast_1d(c)), R.r * domain.radius)
    if isinstance(domain, Triangle):
        v = R.apply(np.asarray(domain.vertices))
        return Triangle(tuple(map(tuple, v)))
    return AffineImage(R, domain)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass
class DrumReport:
    checks: list = field(default_factory=list)

    def add(self, name: str, passed: bool, detail: str = ""):
        self.checks.append(CheckResult(name, passed, detail))

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self):
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            yield f"[{status}] {c.name}" + (f": {c.detail}" if c.detail else "")


def validate_drum(spec: DrumSpec) -> DrumReport:
    """Structural checks: the standing inequality, the dimension root, and
    disjointness of the component hulls.

    For d = 1 the hulls are exact intervals from the fixed-point box
    iteration; for d >= 2 only bounding-box disjointness is checked and the
    smoothness of the generator cells is reported as not implemented.
    """
    rep = DrumReport()
    r = np.asarray(spec.coefficients)
    lo = float(np.sum(r ** spec.d))
    hi = float(np.sum(r ** (spec.d - 1)))
    rep.add("standing inequality", lo < 1.0 < hi,
            f"sum r^d = {lo:.6g}, sum r^(d-1) = {hi:.6g}")
    try:
        b = spec.dimension
        rep.add("dimension root", spec.d - 1 < b < spec.d, f"b = {b:.12g}")
    except ConstraintViolated as exc:
        rep.add("dimension root", False, str(exc))

    if spec.d == 1:
        box_lo, box_hi = spec.hull_box()
        boxes = []
        glo, ghi, _ = spec.generator.proposal_cell()
        boxes.append((float(glo[0]), float(ghi[0]), "generator"))
        for i, s in enumerate(spec.similitudes):
            ends = s.apply(np.array([[box_lo[0]], [box_hi[0]]])).ravel()
            boxes.append((float(ends.min()), float(ends.max()), f"R_{i + 1}(G)"))
        disjoint = True
        detail = []
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                alo, ahi, aname = boxes[i]
                blo, bhi, bname = boxes[j]
                if min(ahi, bhi) - max(alo, blo) > 1e-12:
                    disjoint = False
                    detail.append(f"{aname} overlaps {bname}")
        rep.add("component hulls disjoint", disjoint,
                "; ".join(detail) if detail else "exact interval hulls")
    else:
        hits, n_eff = _component_overlap_mc(spec)
        rep.add("components disjoint (sampled)", hits == 0,
                f"{hits} overlap hits in {n_eff} interior samples")
        rep.add("generator cell smoothness", True,
                "C^{1,1} verification not implemented; skipped")
    return rep


def _component_overlap_mc(spec: DrumSpec, n: int = 20000, depth: int = 8,
                          seed: int = 20260815) -> tuple[int, int]:
    """Count sampled points carried by more than one piece of the
    decomposition G = (union_j R_j G) u G_0.  Deterministic seed: the check
    is a fixed procedure, not an estimator."""
    ifs = IFSDrum(spec, depth_cap=depth)
    lo, hi = spec.hull_box()
    rng = np.random.default_rng(seed)
    pts = lo + rng.random((n, spec.d)) * (hi - lo)
    q = pts if spec.d > 1 else pts[:, 0]
    labels = spec.generator.contains_many(q, depth).astype(np.int32)
    for s in spec.similitudes:
        pulled = s.inverse(pts)
        in_box = np.all((pulled >= lo - 1e-12) & (pulled <= hi + 1e-12), axis=-1)
        member = np.zeros(n, dtype=bool)
        if in_box.any():
            sub = pulled[in_box] if spec.d > 1 else pulled[in_box, 0]
            member[in_box] = ifs.contains_many(sub, depth)
        labels += member.astype(np.int32)
    return int(np.sum(labels > 1)), int(np.sum(labels > 0))


# ---------------------------------------------------------------------------
# stock drums and the spec-file loader
# ---------------------------------------------------------------------------

def cantor_drum() -> DrumSpec:
    """Middle-thirds drum: r = (1/3, 1/3), generator (1/3, 2/3)."""
    return DrumSpec(
        similitudes=(Similitude.line(1.0 / 3.0, 0.0),
                     Similitude.line(1.0 / 3.0, 2.0 / 3.0)),
        generator=Interval(1.0 / 3.0, 2.0 / 3.0),
        d=1)


def gasket_drum() -> DrumSpec:
    """Sierpinski gasket drum: three half-scale maps, central generator."""
    eye = np.eye(2)
    sims = (
        Similitude(0.5, eye, np.array([0.0, 0.0])),
        Similitude(0.5, eye, np.array([0.5, 0.0])),
        Similitude(0.5, eye, np.array([0.25, math.sqrt(3.0) / 4.0])),
    )
    gen = Triangle(((0.5, 0.0), (0.75, math.sqrt(3.0) / 4.0),
                    (0.25, math.sqrt(3.0) / 4.0)))
    return DrumSpec(similitudes=sims, generator=gen, d=2)


_NUM = r"[-+0-9./eE]+"


def _parse_number(tok: str) -> float:
    tok = tok.strip()
    if "/" in tok:
        num, den = tok.split("/")
        return float(num) / float(den)
    return float(tok)


def load_drum_spec(path: str) -> DrumSpec:
    """Read a DrumSpec from a key=value text file.

    Grammar (one key per line, # comments allowed):
        schema=1
        d = <int>
        r_<j> = <float or p/q>
        translate_<j> = <d floats>
        rotate_<j> = <d*d floats, row-major>      (optional, identity)
        generator = interval a b | union a1 b1 a2 b2 ... |
                    disk cx cy r | triangle x1 y1 x2 y2 x3 y3
    """
    entries = {}
    try:
        with open(path) as fh:
            for raw in fh:
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise BadPlanFile(f"bad line in {path!r}: {raw.strip()!r}")
                key, val = line.split("=", 1)
                entries[key.strip()] = val.strip()
    except OSError as exc:
        raise BadPlanFile(f"cannot read drum spec {path!r}: {exc}") from exc

    if entries.get("schema", "1") != "1":
        raise BadPlanFile(f"unsupported schema {entries.get('schema')!r}")
    try:
        d = int(entries["d"])
    except KeyError:
        raise BadPlanFile("drum spec needs a 'd' line")

    js = sorted({int(m.group(1)) for k in entries
                 for m in [re.fullmatch(r"r_(\d+)", k)] if m})
    if not js:
        raise BadPlanFile("drum spec needs r_1, r_2, ... lines")
    sims = []
    for j in js:
        r = _parse_number(entries[f"r_{j}"])
        tr = entries.get(f"translate_{j}", " ".join(["0"] * d))
        shift = np.array([_parse_number(v) for v in tr.split()])
        rot = entries.get(f"rotate_{j}")
        if rot is None:
            mat = np.eye(d)
        else:
            vals = [_parse_number(v) for v in rot.split()]
            mat = np.array(vals).reshape(d, d)
        sims.append(Similitude(r, mat, shift))

    gen_spec = entries.get("generator")
    if gen_spec is None:
        raise BadPlanFile("drum spec needs a 'generator' line")
    parts = gen_spec.split()
    kind, args = parts[0], [_parse_number(v) for v in parts[1:]]
    if kind == "interval" and len(args) == 2:
        gen: Domain = Interval(args[0], args[1])
    elif kind == "union" and len(args) >= 2 and len(args) % 2 == 0:
        gen = IntervalUnion(tuple((args[i], args[i + 1]) for i in range(0, len(args), 2)))
    elif kind == "disk" and len(args) == 3:
        gen = Disk((args[0], args[1]), args[2])
    elif kind == "triangle" and len(args) == 6:
        gen = Triangle(((args[0], args[1]), (args[2], args[3]), (args[4], args[5])))
    else:
        raise BadPlanFile(f"unsupported generator spec {gen_spec!r}")
    return DrumSpec(similitudes=tuple(sims), generator=gen, d=d)
