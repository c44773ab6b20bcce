"""Experiment plans, record files, decay fits, and the rate table."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drumheat.errors import (BadPlanFile, DeficitNotResolved, DomainError,
                             GridTooCoarse)
from drumheat.geometry import Interval, cantor_drum
from drumheat.harness import (ExperimentPlan, FitResult, RunRecord,
                              compare_rates, fit_power_exponent,
                              geometric_grid, load_records,
                              log_periodic_extract, richardson_extrapolate,
                              run_plan, write_csv, write_decay_svg)
from drumheat.harness import _cell_seed, _jsonable_extra
from drumheat.simulate import Estimate, PathScheme, config_digest

LN3 = math.log(3)


def _scheme(steps=16, depth=45, levels=0):
    return PathScheme(n_steps=steps, membership_depth=depth,
                      richardson_levels=levels)


def _plan(tmp_path, **over):
    kw = dict(domain_id="interval:0,1", alphas=(1.5,), t_min=1e-2, t_max=1e-1,
              points_per_decade=4, estimators=("rhc",), n_points=2000,
              scheme=_scheme(), master_seed=99,
              out_path=str(tmp_path / "run.jsonl"), domain=Interval(0.0, 1.0))
    kw.update(over)
    return ExperimentPlan(**kw)


# ---------------------------------------------------------------------------
# grids, plans, records
# ---------------------------------------------------------------------------

def test_geometric_grid_density():
    g = geometric_grid(1e-4, 1e-1, 8)
    assert len(g) == 25
    assert g[0] == pytest.approx(1e-4, rel=1e-12)
    assert g[-1] == pytest.approx(1e-1, rel=1e-12)
    ratios = g[1:] / g[:-1]
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-9)
    with pytest.raises(DomainError):
        geometric_grid(1e-1, 1e-4, 8)


def test_plan_validation(tmp_path):
    with pytest.raises(DomainError):
        _plan(tmp_path, t_min=0.1, t_max=0.01)
    with pytest.raises(DomainError):
        _plan(tmp_path, points_per_decade=3)
    with pytest.raises(DomainError):
        _plan(tmp_path, points_per_decade=8, log_periodic=True)  # needs 16
    with pytest.raises(DomainError):
        _plan(tmp_path, alphas=(2.0,))
    with pytest.raises(DomainError):
        _plan(tmp_path, estimators=("heat",))
    with pytest.raises(DomainError):
        _plan(tmp_path, estimators=("defect",), drum=None)
    with pytest.raises(DomainError):
        _plan(tmp_path, domain=None)
    with pytest.raises(DomainError):
        _plan(tmp_path, n_points=0)
    # defect-only plans do not need a pointwise domain
    p = _plan(tmp_path, estimators=("defect",), domain=None, drum=cantor_drum())
    assert p.cells()


def test_plan_cells_order_and_digest(tmp_path):
    p = _plan(tmp_path, alphas=(0.7, 1.5), estimators=("shc", "rhc"))
    cells = p.cells()
    assert len(cells) == 2 * 5 * 2
    assert cells[0] == (0.7, pytest.approx(1e-2), "shc")
    assert cells[1][2] == "rhc"
    assert cells[10][0] == 1.5
    assert p.digest() == p.digest()
    assert p.digest() != _plan(tmp_path, master_seed=100,
                               alphas=(0.7, 1.5),
                               estimators=("shc", "rhc")).digest()


def test_record_line_shape():
    rec = RunRecord(domain_id="interval:0,1", alpha=1.5, t=0.01,
                    estimator="rhc", value=0.9, stderr=0.001,
                    n_samples=1000, seed=7, digest="abc", wall_time=3.7)
    obj = json.loads(rec.to_line())
    assert sorted(obj) == ["alpha", "digest", "domain", "estimator", "n",
                           "seed", "stderr", "t", "value"]
    assert "wall_time" not in rec.to_line()
    back = RunRecord.from_obj(obj)
    assert back.key() == rec.key() and back.value == rec.value
    err = RunRecord(domain_id="d", alpha=1.0, t=0.1, estimator="shc",
                    value=None, stderr=None, n_samples=0, seed=1,
                    digest="x", error="RuntimeError: boom")
    obj = json.loads(err.to_line())
    assert obj["error"].startswith("RuntimeError") and obj["value"] is None


def test_jsonable_extra_filters():
    out = _jsonable_extra({
        "flag": True, "note": "ok", "count": np.int64(3),
        "val": np.float64(1.5), "bad": float("nan"),
        "arr": np.array([1.0, 2.0]), "badarr": np.array([1.0, np.inf]),
        "obj": object(),
    })
    assert out == {"arr": [1.0, 2.0], "count": 3, "flag": True,
                   "note": "ok", "val": 1.5}
    json.dumps(out, allow_nan=False)


def test_cell_seed_properties():
    s1 = _cell_seed(9, "dom", 1.5, 0.01, "rhc")
    assert s1 == _cell_seed(9, "dom", 1.5, 0.01, "rhc")
    assert s1 != _cell_seed(9, "dom", 1.5, 0.01, "shc")
    assert s1 != _cell_seed(10, "dom", 1.5, 0.01, "rhc")
    assert 0 <= s1 < 2 ** 63


# ---------------------------------------------------------------------------
# run_plan
# ---------------------------------------------------------------------------

def test_run_plan_executes_and_reloads(tmp_path):
    plan = _plan(tmp_path)
    recs = run_plan(plan)
    assert len(recs) == 5
    assert all(r.error is None and 0.0 < r.value < 1.0 for r in recs)
    with open(plan.out_path, encoding="utf-8") as fh:
        head = json.loads(fh.readline())
    assert head == {"plan": plan.digest(), "schema": 1}
    loaded = load_records(plan.out_path)
    assert [r.key() for r in loaded] == [r.key() for r in recs]
    assert [r.value for r in loaded] == [r.value for r in recs]


def test_run_plan_byte_identical_rerun_resume_and_workers(tmp_path):
    plan_a = _plan(tmp_path, out_path=str(tmp_path / "a.jsonl"))
    run_plan(plan_a)
    ref = open(plan_a.out_path, "rb").read()

    plan_b = _plan(tmp_path, out_path=str(tmp_path / "b.jsonl"))
    run_plan(plan_b)
    assert open(plan_b.out_path, "rb").read() == ref

    # truncate after two records and resume
    lines = ref.decode().splitlines(keepends=True)
    trunc = tmp_path / "c.jsonl"
    trunc.write_text("".join(lines[:3]), encoding="utf-8")
    plan_c = _plan(tmp_path, out_path=str(trunc))
    recs = run_plan(plan_c)
    assert len(recs) == 5
    assert open(trunc, "rb").read() == ref

    plan_d = _plan(tmp_path, out_path=str(tmp_path / "d.jsonl"))
    run_plan(plan_d, workers=4)
    assert open(plan_d.out_path, "rb").read() == ref


def test_run_plan_rejects_foreign_file(tmp_path):
    path = tmp_path / "foreign.jsonl"
    path.write_text('{"plan":"deadbeef","schema":1}\n', encoding="utf-8")
    with pytest.raises(BadPlanFile):
        run_plan(_plan(tmp_path, out_path=str(path)))


def test_run_plan_records_cell_errors(tmp_path):
    class Broken(Interval):
        def contains_many(self, x, depth):
            raise RuntimeError("boom")

    plan = _plan(tmp_path, domain=Broken(0.0, 1.0), domain_id="broken",
                 out_path=str(tmp_path / "broken.jsonl"))
    recs = run_plan(plan)
    assert len(recs) == 5
    assert all(r.value is None and "RuntimeError: boom" in r.error
               for r in recs)
    # the file still round-trips
    assert len(load_records(plan.out_path)) == 5


def test_load_records_guards(tmp_path):
    p = tmp_path / "bad1.jsonl"
    p.write_text("not json\n", encoding="utf-8")
    with pytest.raises(BadPlanFile):
        load_records(str(p))
    p2 = tmp_path / "bad2.jsonl"
    p2.write_text('{"schema":2}\n', encoding="utf-8")
    with pytest.raises(BadPlanFile):
        load_records(str(p2))
    p3 = tmp_path / "bad3.jsonl"
    p3.write_text('{"schema":1}\n{"alpha":1.0}\n', encoding="utf-8")
    with pytest.raises(BadPlanFile):
        load_records(str(p3))


def test_write_csv(tmp_path):
    recs = [RunRecord("dom", 1.5, 0.01, "rhc", 0.875, 0.001, 100, 3, "dg"),
            RunRecord("dom", 1.5, 0.02, "rhc", None, None, 0, 4, "dg",
                      error="x")]
    path = tmp_path / "out.csv"
    write_csv(recs, str(path))
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# schema=1"
    assert lines[1] == "domain,alpha,t,estimator,value,stderr,n,seed"
    assert lines[2] == "dom,1.5,0.01,rhc,0.875,0.001,100,3"
    assert lines[3] == "dom,1.5,0.02,rhc,,,0,4"


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def _synthetic_records(ts, deficits, stderrs, volume=1.0):
    return [RunRecord("dom", 1.5, float(t), "shc",
                      float(volume - d), float(s), 1000, i, "dg")
            for i, (t, d, s) in enumerate(zip(ts, deficits, stderrs))]


def test_fit_noiseless_power_law_exact():
    ts = geometric_grid(1e-4, 1e-1, 8)
    deficits = 0.37 * ts ** 0.25
    recs = _synthetic_records(ts, deficits, np.zeros_like(ts))
    fit = fit_power_exponent(recs, volume=1.0)
    assert fit.exponent == pytest.approx(0.25, abs=1e-12)
    assert fit.amplitude == pytest.approx(0.37, rel=1e-12)
    assert fit.n_points == len(ts)
    assert fit.chi2 < 1e-20


def test_fit_weighted_recovery_with_noise():
    rng = np.random.default_rng(5)
    ts = geometric_grid(1e-4, 1e-1, 8)
    true = 0.2 * ts ** 0.5
    sigma = 0.02 * true
    obs = true + sigma * rng.standard_normal(len(ts))
    recs = _synthetic_records(ts, obs, sigma)
    fit = fit_power_exponent(recs, volume=1.0)
    assert abs(fit.exponent - 0.5) < 3.5 * fit.exponent_stderr
    # chi2 per dof should be order 1 for a correct model
    assert 0.3 < fit.chi2 / (len(ts) - 2) < 3.0


def test_fit_volume_none_uses_values_directly():
    ts = geometric_grid(1e-3, 1e-1, 8)
    vals = 2.0 * ts ** 0.7
    recs = [RunRecord("dom", 1.5, float(t), "defect", float(v), 0.0,
                      100, i, "dg") for i, (t, v) in enumerate(zip(ts, vals))]
    fit = fit_power_exponent(recs, volume=None)
    assert fit.exponent == pytest.approx(0.7, abs=1e-12)
    assert fit.amplitude == pytest.approx(2.0, rel=1e-12)


def test_fit_skips_error_records_and_needs_four():
    ts = geometric_grid(1e-3, 1e-1, 4)
    recs = _synthetic_records(ts, 0.1 * ts ** 0.5, np.zeros_like(ts))
    recs[0].error = "boom"
    recs[0].value = None
    fit = fit_power_exponent(recs, volume=1.0)
    assert fit.n_points == len(ts) - 1
    with pytest.raises(DomainError):
        fit_power_exponent(recs[:4], volume=1.0)  # 4 left minus 1 error = 3


def test_fit_unresolved_deficit_raises():
    ts = geometric_grid(1e-3, 1e-1, 8)
    deficits = 0.1 * ts ** 0.5
    stderrs = np.full_like(ts, 1.0)  # noise swamps every deficit
    recs = _synthetic_records(ts, deficits, stderrs)
    with pytest.raises(DeficitNotResolved):
        fit_power_exponent(recs, volume=1.0)


def test_log_periodic_recovery():
    # modulated power law: the acceptance-grade synthetic
    period = 1.5 * LN3
    ts = geometric_grid(1e-4, 1e-1, 16)
    x = np.log(ts)
    deficits = 0.3 * ts ** 0.25 * np.exp(0.1 * np.sin(2 * np.pi * x / period))
    recs = _synthetic_records(ts, deficits, np.zeros_like(ts))
    fit = fit_power_exponent(recs, volume=1.0)
    assert abs(fit.exponent - 0.25) < 0.01
    lp = log_periodic_extract(recs, expected_period=period, volume=1.0)
    assert abs(lp.period - period) / period < 0.05
    assert abs(lp.amplitude - 0.1) / 0.1 < 0.2
    assert lp.significance > 0.99


def test_log_periodic_null_is_clean():
    rng = np.random.default_rng(11)
    ts = geometric_grid(1e-4, 1e-1, 16)
    true = 0.3 * ts ** 0.25
    sigma = 0.01 * true
    obs = true + sigma * rng.standard_normal(len(ts))
    recs = _synthetic_records(ts, obs, sigma)
    lp = log_periodic_extract(recs, expected_period=1.5 * LN3, volume=1.0)
    assert lp.significance < 0.95


def test_log_periodic_grid_too_coarse():
    ts = geometric_grid(1e-4, 1e-1, 16)
    recs = _synthetic_records(ts, 0.3 * ts ** 0.25, np.zeros_like(ts))
    with pytest.raises(GridTooCoarse):
        log_periodic_extract(recs, expected_period=0.5, volume=1.0)


# ---------------------------------------------------------------------------
# rate table
# ---------------------------------------------------------------------------

def _fit(exponent, se):
    return FitResult(exponent=exponent, amplitude=1.0, exponent_stderr=se,
                     intercept_stderr=se, n_points=10, chi2=1.0,
                     residuals=np.zeros(10), log_t=np.linspace(-9, -2, 10))


def test_compare_rates_predictions_and_flags():
    b = math.log(2) / LN3
    gap = 1.0 - b
    fits = [
        ("shc", 1.5, _fit(gap / 1.5, 0.01)),        # matches prediction
        ("shc", 0.3, _fit(1.0, 0.01)),              # below the window: t^1
        ("rhc", 1.0, _fit(1.0, 0.05)),              # log factor expected
        ("rhc", 1.5, _fit(0.60, 0.01)),             # CI excludes 2/3
        ("skbm", gap, _fit(1.0, 0.05)),             # boundary case, log flag
        ("defect", 1.5, _fit(0.9, 0.1)),            # no prediction
    ]
    report = compare_rates(fits, d=1, boundary_dim=b)
    rows = report.rows
    assert rows[0].predicted == pytest.approx(gap / 1.5) and not rows[0].excluded
    assert rows[1].predicted == 1.0
    assert rows[2].log_factor and rows[2].predicted == 1.0
    assert rows[3].excluded
    assert rows[4].log_factor
    assert rows[5].predicted is None
    text = "\n".join(report.lines())
    assert "rate comparison" in text
    assert "log factor expected" in text
    assert "CI EXCLUDES prediction" in text


# ---------------------------------------------------------------------------
# Richardson over step counts
# ---------------------------------------------------------------------------

def _est(value, stderr, seed=1):
    return Estimate(value=value, stderr=stderr, n_samples=1000,
                    master_seed=seed, digest=config_digest(v=value))


def test_richardson_extrapolate_exact_power_law():
    limit, C, q = 0.8, 0.05, 1.0
    fine = _est(limit + C * 0.25 ** q, 1e-9)
    mid = _est(limit + C * 0.5 ** q, 1e-9)
    coarse = _est(limit + C * 1.0 ** q, 1e-9)
    out = richardson_extrapolate(coarse, mid, fine)
    assert not out.extra["noise_dominates"]
    assert out.value == pytest.approx(limit, abs=1e-9)
    assert out.extra["richardson_q"] == pytest.approx(q, abs=1e-6)


def test_richardson_extrapolate_sqrt_rate():
    limit, C = 0.5, 0.02
    fine = _est(limit + C * 0.25 ** 0.5, 1e-10)
    mid = _est(limit + C * 0.5 ** 0.5, 1e-10)
    coarse = _est(limit + C, 1e-10)
    out = richardson_extrapolate(coarse, mid, fine)
    assert out.value == pytest.approx(limit, abs=1e-8)
    assert out.extra["richardson_q"] == pytest.approx(0.5, abs=1e-4)


def test_richardson_extrapolate_noise_fallback():
    fine = _est(0.8001, 0.01)
    mid = _est(0.7995, 0.01)
    coarse = _est(0.8004, 0.01)   # differences change sign: pure noise
    out = richardson_extrapolate(coarse, mid, fine)
    assert out.extra["noise_dominates"]
    assert out.value == fine.value
    assert out.stderr >= fine.stderr


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------

def test_write_decay_svg(tmp_path):
    ts = geometric_grid(1e-4, 1e-1, 8)
    deficits = 0.3 * ts ** 0.25
    recs = _synthetic_records(ts, deficits, 0.01 * deficits)
    fit = fit_power_exponent(recs, volume=1.0)
    series = [{"label": "shc a=1.5", "t": ts, "deficit": deficits,
               "stderr": 0.01 * deficits, "fit": fit}]
    path = tmp_path / "plot.svg"
    write_decay_svg(series, str(path), title="decay")
    text = path.read_text(encoding="utf-8")
    assert text.startswith("<svg")
    assert text.rstrip().endswith("</svg>")
    assert "polyline" in text and "circle" in text
    assert "log10 deficit" in text and "fit residual" in text
    # deterministic bytes
    path2 = tmp_path / "plot2.svg"
    write_decay_svg(series, str(path2), title="decay")
    assert path.read_bytes() == path2.read_bytes()


def test_write_decay_svg_empty_series(tmp_path):
    path = tmp_path / "empty.svg"
    write_decay_svg([{"label": "none", "t": [], "deficit": [],
                      "stderr": []}], str(path))
    assert path.read_text(encoding="utf-8").startswith("<svg")


# ---------------------------------------------------------------------------
# properties
# ---------------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 1.5), st.floats(0.01, 5.0))
def test_fit_recovers_planted_exponent(p, amp):
    ts = geometric_grid(1e-4, 1e-1, 8)
    recs = _synthetic_records(ts, amp * ts ** p, np.zeros_like(ts),
                              volume=amp + 1.0)
    fit = fit_power_exponent(recs, volume=amp + 1.0)
    assert fit.exponent == pytest.approx(p, abs=1e-10)
    assert fit.amplitude == pytest.approx(amp, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 32),
       st.floats(1e-6, 1e-3), st.floats(1.5, 4.0))
def test_geometric_grid_properties(ppd, t_min, factor):
    t_max = t_min * 10.0 ** factor
    g = geometric_grid(t_min, t_max, ppd)
    assert len(g) == int(round(ppd * math.log10(t_max / t_min))) + 1
    assert g[0] == pytest.approx(t_min, rel=1e-9)
    assert g[-1] == pytest.approx(t_max, rel=1e-9)
    assert np.all(np.diff(g) > 0)
