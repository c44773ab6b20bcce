"""Geometry: dimension solver, exact ternary kernel, domain variants,
drum specs, loader."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drumheat.errors import BadPlanFile, ConstraintViolated, DomainError
from drumheat.geometry import (DEPTH_CAP, AffineImage, CantorComplement,
                               Disk, DrumSpec, GasketComplement, IFSDrum,
                               Interval, IntervalUnion, Similitude, Triangle,
                               apply_similitude, cantor_drum, cantor_first_one,
                               cantor_gaps, default_membership_depth,
                               dist_to_complement, gasket_drum, load_drum_spec,
                               solve_dimension, validate_drum, volume)

RNG = np.random.default_rng(1234)


# ---------------------------------------------------------------------------
# dimension solver
# ---------------------------------------------------------------------------

def test_dimension_cantor():
    b = solve_dimension((1 / 3, 1 / 3), 1)
    assert abs(b - math.log(2) / math.log(3)) < 1e-12


def test_dimension_gasket():
    b = solve_dimension((0.5, 0.5, 0.5), 2)
    assert abs(b - math.log(3) / math.log(2)) < 1e-12


def test_dimension_uneven_ratios():
    r = (0.5, 0.25, 0.2)
    b = solve_dimension(r, 1)
    assert abs(sum(ri ** b for ri in r) - 1.0) < 1e-14
    assert 0.0 < b < 1.0


def test_dimension_standing_assumption():
    with pytest.raises(ConstraintViolated):
        solve_dimension((0.5, 0.5), 1)          # sum r^d = 1, not < 1
    with pytest.raises(ConstraintViolated):
        solve_dimension((0.9, 0.9), 1)
    with pytest.raises(ConstraintViolated):
        solve_dimension((0.2,), 1)              # sum r^(d-1) = 1, not > 1
    with pytest.raises(ConstraintViolated):
        solve_dimension((1.0, 0.5), 1)
    with pytest.raises(ConstraintViolated):
        solve_dimension((), 1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.05, 0.45), min_size=2, max_size=6))
def test_dimension_residual_and_permutation(ratios):
    lo = sum(r for r in ratios)
    hi = len(ratios)
    if not (sum(r ** 1 for r in ratios) < 1.0 < hi):
        return
    b = solve_dimension(tuple(ratios), 1)
    assert abs(sum(r ** b for r in ratios) - 1.0) < 1e-12
    b2 = solve_dimension(tuple(reversed(ratios)), 1)
    assert b == pytest.approx(b2, abs=1e-13)
    assert 0.0 < b < 1.0
    assert lo > 0.0  # silence unused warning


# ---------------------------------------------------------------------------
# exact ternary kernel
# ---------------------------------------------------------------------------

def _first_one_reference(x: float, depth: int):
    """(first-1 level, leading ternary digit) of the binary rational x,
    computed exactly with Fraction."""
    f = Fraction(x)
    if not (0 < f < 1):
        return 0, 0
    first = None
    level = 0
    for k in range(1, depth + 1):
        f *= 3
        digit = int(f)          # floor; exact for Fraction
        f -= digit
        if first is None:
            first = digit
        if digit == 1:
            level = k
            break
    return level, first


def test_first_one_matches_fraction_oracle_randoms():
    x = RNG.random(2000)
    lev, dig = cantor_first_one(x, DEPTH_CAP)
    for xi, li, di in zip(x, lev, dig):
        rl, rd = _first_one_reference(float(xi), DEPTH_CAP)
        assert li == rl
        if rl > 0:
            assert di == rd


def test_first_one_exact_rationals():
    # gap interiors, endpoints, and Cantor points with known expansions
    cases = [
        (0.5, 1),            # 0.111... first digit 1
        (1 / 3 + 1e-9, 1),   # just inside the middle gap
        (0.25, 3),           # ternary 0.020202..., digit 1 appears never ->
    ]
    # 0.25 = 0.|02 02 ...|_3 exactly (1/4 = 2/9 + 2/81 + ...): no digit 1
    lev, _ = cantor_first_one(np.array([0.5]), 45)
    assert lev[0] == 1
    lev, _ = cantor_first_one(np.array([0.25]), 45)
    assert lev[0] == 0
    lev, _ = cantor_first_one(np.array([1 / 3 + 1e-9]), 45)
    assert lev[0] == 1
    assert cases  # documented above


def test_first_one_gap_endpoints_exact():
    # endpoints of gaps are ternary rationals whose expansion terminates
    # with a digit 1 (left endpoint 0.0222... vs 0.1): the float nearest
    # 1/3 is below it, so its exact expansion has digit 0 then 2s
    x = np.array([1 / 3, 2 / 3, 1 / 9, 2 / 9])
    lev, _ = cantor_first_one(x, 45)
    for xi, li in zip(x, lev):
        rl, _ = _first_one_reference(float(xi), 45)
        assert li == rl


def test_first_one_depth_monotone():
    x = RNG.random(500)
    lev_shallow, _ = cantor_first_one(x, 5)
    lev_deep, _ = cantor_first_one(x, 30)
    found = lev_shallow > 0
    # whatever is found at depth 5 is found at the same level at depth 30
    assert np.array_equal(lev_shallow[found], lev_deep[found])
    assert np.all(lev_deep[found & (lev_deep > 0)] <= 5)


def test_cantor_gaps_structure():
    g = cantor_gaps(3)
    assert g.shape == (7, 2)
    assert np.all(np.diff(g[:, 0]) > 0)
    np.testing.assert_allclose(g[3], [1 / 3, 2 / 3], rtol=1e-15)
    total = np.sum(g[:, 1] - g[:, 0])
    assert total == pytest.approx(1.0 - (2 / 3) ** 3, rel=1e-13)


def test_cantor_gaps_agree_with_membership():
    g = cantor_gaps(6)
    mids = (g[:, 0] + g[:, 1]) / 2
    dom = CantorComplement()
    assert np.all(dom.contains_many(mids, depth=6))
    # endpoints excluded
    assert not np.any(dom.contains_many(g[:, 0], depth=6) &
                      np.isin(g[:, 0], [1 / 3, 2 / 3]))


# ---------------------------------------------------------------------------
# CantorComplement domain
# ---------------------------------------------------------------------------

def test_cantor_membership_vs_gap_list():
    dom = CantorComplement()
    x = RNG.random(3000)
    got = dom.contains_many(x, depth=8)
    g = cantor_gaps(8)
    ref = np.zeros(len(x), dtype=bool)
    for a, b in g:
        ref |= (x > a) & (x < b)
    assert np.array_equal(got, ref)


def test_cantor_dist_known_points():
    dom = CantorComplement()
    d = dom.dist_many(np.array([0.5, 0.4, 1 / 3 + 1e-3, 0.25]), depth=30)
    assert d[0] == pytest.approx(1 / 6, abs=1e-12)
    assert d[1] == pytest.approx(0.4 - 1 / 3, abs=1e-12)
    assert d[2] == pytest.approx(1e-3, abs=1e-12)
    assert d[3] == 0.0


def test_cantor_volume_and_depth_cap():
    dom = CantorComplement(depth_cap=10)
    assert dom.volume() == 1.0
    assert dom.sampling_volume(50) == 1.0
    with pytest.raises(DomainError):
        CantorComplement(depth_cap=0)
    with pytest.raises(DomainError):
        CantorComplement(depth_cap=DEPTH_CAP + 1)


def test_default_membership_depth():
    k1 = default_membership_depth(1e-2, 1.5)
    k2 = default_membership_depth(1e-6, 1.5)
    assert k1 == math.ceil(math.log(10 ** (4 / 3)) / math.log(3)) + 5
    assert k2 >= k1
    # the truncated pre-set measure must track the displacement scale:
    # (2/3)^K / t^((1-b)/alpha) is bounded above and below as t -> 0
    b = math.log(2) / math.log(3)
    ratios = [(2 / 3) ** default_membership_depth(t, 1.5)
              / t ** ((1 - b) / 1.5) for t in (1e-2, 1e-3, 1e-5, 1e-7)]
    assert max(ratios) / min(ratios) < 3.0
    assert default_membership_depth(1e-30, 0.3) == DEPTH_CAP  # clamped
    with pytest.raises(DomainError):
        default_membership_depth(0.0, 1.5)


# ---------------------------------------------------------------------------
# elementary domains
# ---------------------------------------------------------------------------

def test_interval_basics():
    dom = Interval(0.25, 0.75)
    assert dom.volume() == 0.5
    assert np.array_equal(dom.contains_many(np.array([0.3, 0.25, 0.8])),
                          [True, False, False])
    np.testing.assert_allclose(dom.dist_many(np.array([0.3, 0.5, 0.9])),
                               [0.05, 0.25, 0.0], atol=1e-15)
    with pytest.raises(DomainError):
        Interval(1.0, 0.5)


def test_interval_union_basics():
    dom = IntervalUnion(((0.0, 0.4), (0.6, 1.0)))
    assert dom.volume() == pytest.approx(0.8)
    x = np.array([0.2, 0.4, 0.5, 0.6, 0.7, 1.0])
    assert np.array_equal(dom.contains_many(x),
                          [True, False, False, False, True, False])
    np.testing.assert_allclose(dom.dist_many(x), [0.2, 0.0, 0.0, 0.0, 0.1, 0.0],
                               atol=1e-15)
    with pytest.raises(DomainError):
        IntervalUnion(((0.0, 0.5), (0.4, 1.0)))
    with pytest.raises(DomainError):
        IntervalUnion(())


def test_disk_and_triangle():
    disk = Disk((1.0, -2.0), 2.0)
    assert disk.volume() == pytest.approx(4 * math.pi)
    pts = np.array([[1.0, -2.0], [2.9, -2.0], [3.1, -2.0]])
    assert np.array_equal(disk.contains_many(pts), [True, True, False])
    np.testing.assert_allclose(disk.dist_many(pts), [2.0, 0.1, 0.0], atol=1e-12)

    tri = Triangle(((0.0, 0.0), (1.0, 0.0), (0.0, 1.0)))
    assert tri.volume() == pytest.approx(0.5)
    pts = np.array([[0.25, 0.25], [0.6, 0.6], [-0.1, 0.2]])
    assert np.array_equal(tri.contains_many(pts), [True, False, False])
    d = tri.dist_many(np.array([[0.25, 0.25]]))
    assert d[0] == pytest.approx(0.25, abs=1e-12)  # legs are closer than the hypotenuse
    d = tri.dist_many(np.array([[0.4, 0.4]]))
    assert d[0] == pytest.approx(0.2 / math.sqrt(2), abs=1e-12)


# ---------------------------------------------------------------------------
# gasket complement
# ---------------------------------------------------------------------------

def test_gasket_known_points():
    dom = GasketComplement()
    centroid = np.array([[0.5, math.sqrt(3) / 6]])        # level-1 triangle
    child = np.array([[0.25, math.sqrt(3) / 12]])         # level-2, left cell
    near_vertex = np.array([[1e-9, 1e-10]])
    lev1 = dom.contains_many(centroid)
    lev2 = dom.contains_many(child, depth=2)
    assert lev1[0] and lev2[0]
    assert not dom.contains_many(child, depth=1)[0]
    assert not dom.contains_many(near_vertex, depth=30)[0]


def test_gasket_area_mc():
    dom = GasketComplement()
    n = 200000
    rng = np.random.default_rng(7)
    lo, hi, _ = dom.proposal_cell()
    pts = lo + rng.random((n, 2)) * (hi - lo)
    frac = float(np.mean(dom.contains_many(pts, depth=30)))
    box = float(np.prod(hi - lo))
    est = frac * box
    target = dom.sampling_volume(30)
    se = box * math.sqrt(frac * (1 - frac) / n)
    assert abs(est - target) < 4 * se


def test_gasket_rounded_volume_formula():
    eps = 0.1
    dom = GasketComplement(corner_radius=eps)
    corner_area = 3 * math.sqrt(3) - math.pi
    assert dom.volume() == pytest.approx(
        math.sqrt(3) / 4 - 4 * corner_area * eps ** 2, rel=1e-14)
    # corner of the big removed triangle is carved away, incenter is not
    assert not dom.contains_many(np.array([[0.5, 0.02]]))[0]
    assert dom.contains_many(np.array([[0.5, math.sqrt(3) / 12]]))[0]
    with pytest.raises(DomainError):
        GasketComplement(corner_radius=0.13)


def test_gasket_rounded_area_mc():
    eps = 0.1
    dom = GasketComplement(corner_radius=eps)
    n = 200000
    rng = np.random.default_rng(11)
    lo, hi, _ = dom.proposal_cell()
    pts = lo + rng.random((n, 2)) * (hi - lo)
    frac = float(np.mean(dom.contains_many(pts, depth=30)))
    box = float(np.prod(hi - lo))
    est = frac * box
    target = dom.sampling_volume(30)
    se = box * math.sqrt(frac * (1 - frac) / n)
    assert abs(est - target) < 4 * se


def test_gasket_dist_positive_iff_inside():
    dom = GasketComplement(corner_radius=0.05)
    rng = np.random.default_rng(3)
    pts = rng.random((2000, 2)) * np.array([1.0, math.sqrt(3) / 2])
    inside = dom.contains_many(pts, depth=12)
    d = dom.dist_many(pts, depth=12)
    assert np.all(d[inside] > 0)
    assert np.all(d[~inside] == 0.0)


# ---------------------------------------------------------------------------
# similitudes and drum specs
# ---------------------------------------------------------------------------

def test_similitude_roundtrip():
    th = 0.7
    rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    s = Similitude(0.4, rot, np.array([1.0, -2.0]))
    pts = RNG.random((50, 2))
    back = s.inverse(s.apply(pts))
    np.testing.assert_allclose(back, pts, atol=1e-12)
    with pytest.raises(ConstraintViolated):
        Similitude(1.2, rot, np.array([0.0, 0.0]))
    with pytest.raises(ConstraintViolated):
        Similitude(0.5, np.array([[1.0, 0.1], [0.0, 1.0]]), np.zeros(2))


def test_apply_similitude_volume_scaling():
    s = Similitude.line(1 / 3, 0.5)
    img = apply_similitude(s, Interval(0.0, 1.0))
    assert volume(img) == pytest.approx(1 / 3)
    x = np.array([0.55, 0.51, 0.49, 0.84])
    # y in R(D) iff R^{-1} y in D
    ref = (s.inverse(x[:, None])[:, 0] > 0) & (s.inverse(x[:, None])[:, 0] < 1)
    assert np.array_equal(img.contains_many(x), ref)


def test_affine_image_of_gasket():
    s = Similitude(0.5, np.eye(2), np.array([0.25, math.sqrt(3) / 4]))
    base = GasketComplement()
    img = AffineImage(s, base)
    pts = RNG.random((500, 2)) * np.array([1.0, math.sqrt(3) / 2])
    got = img.contains_many(pts, depth=10)
    ref = base.contains_many(s.inverse(pts), depth=10)
    assert np.array_equal(got, ref)
    assert volume(img) == pytest.approx(0.25 * base.volume())


def test_cantor_drum_and_validation():
    spec = cantor_drum()
    assert spec.d == 1
    assert spec.dimension == pytest.approx(math.log(2) / math.log(3), abs=1e-13)
    report = validate_drum(spec)
    assert report.all_passed, list(report.lines())


def test_gasket_drum_and_validation():
    spec = gasket_drum()
    assert spec.d == 2
    assert spec.dimension == pytest.approx(math.log(3) / math.log(2), abs=1e-13)
    report = validate_drum(spec)
    assert report.all_passed, list(report.lines())


def test_drum_spec_rejects_bad_input():
    with pytest.raises(ConstraintViolated):
        DrumSpec(similitudes=(), generator=Interval(0, 1), d=1)
    with pytest.raises(ConstraintViolated):
        # fails the standing assumption sum r^d < 1
        DrumSpec(similitudes=(Similitude.line(0.6, 0.0),
                              Similitude.line(0.6, 0.4)),
                 generator=Interval(0.0, 1.0), d=1)


def test_ifs_drum_matches_native_cantor():
    drum = IFSDrum(cantor_drum(), depth_cap=30)
    native = CantorComplement(depth_cap=30)
    x = RNG.random(4000)
    for depth in (1, 2, 5, 12, 30):
        got = np.asarray(drum.contains_many(x, depth))
        ref = np.asarray(native.contains_many(x, depth))
        assert np.array_equal(got, ref), f"depth {depth}"


def test_ifs_drum_matches_native_gasket():
    drum = IFSDrum(gasket_drum(), depth_cap=20)
    native = GasketComplement(depth_cap=20)
    pts = RNG.random((3000, 2)) * np.array([1.0, math.sqrt(3) / 2])
    for depth in (1, 3, 8, 20):
        got = np.asarray(drum.contains_many(pts, depth))
        ref = np.asarray(native.contains_many(pts, depth))
        assert np.array_equal(got, ref), f"depth {depth}"


def test_dist_to_complement_scalar_helper():
    assert dist_to_complement(Interval(0, 1), 0.25) == pytest.approx(0.25)
    assert dist_to_complement(Interval(0, 1), 1.5) == 0.0


# ---------------------------------------------------------------------------
# drum spec loader
# ---------------------------------------------------------------------------

CANTOR_SPEC_TEXT = """\
# middle thirds
schema=1
d = 1
r_1 = 1/3
r_2 = 1/3
translate_2 = 2/3
generator = interval 1/3 2/3
"""


def test_load_drum_spec_roundtrip(tmp_path):
    p = tmp_path / "cantor.drum"
    p.write_text(CANTOR_SPEC_TEXT)
    spec = load_drum_spec(str(p))
    ref = cantor_drum()
    assert spec.d == ref.d
    assert spec.coefficients == pytest.approx(ref.coefficients)
    assert spec.dimension == pytest.approx(ref.dimension, abs=1e-13)
    x = RNG.random(500)
    got = IFSDrum(spec, depth_cap=12).contains_many(x, 12)
    ref_m = IFSDrum(ref, depth_cap=12).contains_many(x, 12)
    assert np.array_equal(np.asarray(got), np.asarray(ref_m))


def test_load_drum_spec_rejects_garbage(tmp_path):
    p = tmp_path / "bad.drum"
    p.write_text("schema=1\nd = 1\ngenerator = interval 0 1\n")
    with pytest.raises(BadPlanFile):
        load_drum_spec(str(p))            # no similitudes
    p.write_text("schema=2\nd = 1\nr_1 = 0.4\ngenerator = interval 0 1\n")
    with pytest.raises(BadPlanFile):
        load_drum_spec(str(p))            # wrong schema
    with pytest.raises(BadPlanFile):
        load_drum_spec(str(tmp_path / "missing.drum"))


# ---------------------------------------------------------------------------
# hypothesis properties
# ---------------------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.floats(1e-9, 1 - 1e-9))
def test_membership_depth_consistency(x):
    """Depth-K membership implies membership at every deeper resolution."""
    dom = CantorComplement()
    arr = np.array([x])
    prev = False
    for depth in (1, 3, 7, 15, 31, 45):
        cur = bool(dom.contains_many(arr, depth)[0])
        if prev:
            assert cur
        prev = cur


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.45), st.floats(0.0, 0.5))
def test_line_similitude_membership_pullback(r, shift):
    s = Similitude.line(r, shift)
    dom = Interval(0.0, 1.0)
    img = apply_similitude(s, dom)
    x = np.linspace(-0.5, 1.5, 41)
    ref = np.asarray(dom.contains_many(s.inverse(x[:, None])[:, 0]))
    assert np.array_equal(np.asarray(img.contains_many(x)), ref)
