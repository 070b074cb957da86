import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from oracles import circle_shadow_residual
from sidsphere.diagnostics import (
    DiagnosticsError,
    band_check,
    estimate_rate,
    fit_power_law,
    median_slope,
    relaxation_flow,
    shadowing_from_series,
    shadowing_residual,
    uniformity_from_points,
    uniformity_test,
)
from sidsphere.geometry import uniform_points
from sidsphere.schedules import BetaSchedule
from sidsphere.simulate import SimConfig, TrajectoryRecord, checkpoint_grid, run_ensemble

CFG = SimConfig(n=1, schedule=BetaSchedule("constant", 0.0), T=1e5)


def synthetic(times, values, n=1):
    t = np.asarray(times, dtype=np.float64)
    k = len(t)
    v = np.asarray(values, dtype=np.float64)
    return TrajectoryRecord(
        config=CFG, times=t, m=np.column_stack([v, np.zeros(k)]), test_means=np.column_stack([v, np.zeros(k)]),
        x=np.tile([1.0, 0.0], (k, 1)), test_labels=("x0", "x1"),
    )


GRID = checkpoint_grid(1.0, 1e5, 10 ** 0.125)


def test_exact_power_law_slope():
    est = estimate_rate(synthetic(GRID, GRID ** -0.5), "x0")
    assert est.slope == pytest.approx(-0.5, abs=1e-10)
    assert est.n_used == len(GRID)


def test_constant_series_has_zero_slope():
    assert estimate_rate(synthetic(GRID, np.full(len(GRID), 0.3)), "x0").slope == pytest.approx(0.0, abs=1e-12)


def test_window_restricts_fit_and_feature_labels_work():
    vals = np.where(GRID < 999.0, 1.0, GRID ** -1.0)
    rec = synthetic(GRID, vals)
    assert estimate_rate(rec, "x0", window=(1e3, 1e5)).slope == pytest.approx(-1.0, abs=1e-10)
    assert estimate_rate(rec, "m0", window=(1e3, 1e5)).slope == pytest.approx(-1.0, abs=1e-10)
    assert estimate_rate(rec, "m_norm", window=(1e3, 1e5)).slope == pytest.approx(-1.0, abs=1e-10)


def test_zero_values_are_dropped_and_counted():
    vals = GRID ** -0.5
    vals[::3] = 0.0
    est = fit_power_law(GRID, vals)
    assert est.n_dropped == len(GRID[::3])
    assert est.slope == pytest.approx(-0.5, abs=1e-10)


def test_errors():
    rec = synthetic(GRID, GRID ** -0.5)
    with pytest.raises(DiagnosticsError):
        estimate_rate(rec, "x0", window=(1e4, 1e6))
    with pytest.raises(DiagnosticsError):
        estimate_rate(rec, "x0", window=(9e4, 1e5))
    with pytest.raises(KeyError):
        estimate_rate(rec, "x7")


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-6, 1e6), st.integers(0, 2**32 - 1))
def test_slope_is_invariant_under_positive_rescaling(c, seed):
    rng = np.random.default_rng(seed)
    vals = GRID ** -0.5 * np.exp(rng.normal(0, 0.3, len(GRID)))
    a = fit_power_law(GRID, vals)
    b = fit_power_law(GRID, c * vals)
    assert b.slope == pytest.approx(a.slope, abs=1e-9)
    assert b.intercept == pytest.approx(a.intercept + math.log(c), abs=1e-9)


def test_relaxation_flow_solves_linear_ode():
    s = np.linspace(0, 3, 7)
    y = relaxation_flow(s, 2.0, 0.5)
    assert np.allclose(y, 0.5 + 1.5 * np.exp(-s))


def test_series_following_flow_has_zero_residual():
    tau = np.arange(0, 8.01, 0.125)
    vals = relaxation_flow(tau, 0.7, 0.1)
    rep = shadowing_from_series(np.exp(tau), vals, horizon=1.0, target=0.1)
    assert np.max(rep.residuals) < 1e-14


@pytest.mark.parametrize("horizon", [1.0, 2.0])
def test_shadowing_closed_form(horizon):
    # checkpoints every 1/128 in log time; for horizon 2 the maximizer 2 log 2 is off-grid
    tau = np.arange(0, 12.0 + 1e-9, 1 / 128)
    rep = shadowing_from_series(np.exp(tau), np.exp(-tau / 2), horizon=horizon, target=0.0)
    grid_s = tau[tau <= horizon + 1e-12]
    expect_unit = np.max(np.exp(-grid_s / 2) - np.exp(-grid_s))
    expect = np.exp(-rep.log_times / 2) * expect_unit
    assert np.allclose(rep.residuals, expect, rtol=0, atol=1e-10)
    if horizon == 1.0:
        assert np.allclose(rep.residuals, [circle_shadow_residual(t, 1.0) for t in rep.log_times], atol=1e-10)
    assert rep.exponent == pytest.approx(-0.5, abs=1e-9)


def test_shadowing_rejects_coarse_grid():
    t = np.geomspace(1, 1e5, 6)
    with pytest.raises(DiagnosticsError):
        shadowing_from_series(t, t ** -0.5)


def test_shadowing_on_record_uses_uniform_mean():
    rec = synthetic(GRID, GRID ** -0.5)
    rep = shadowing_residual(rec, "x0", fit_window=(1e2, 1e5))
    assert rep.exponent == pytest.approx(-0.5, abs=0.05)


@pytest.mark.parametrize("n", [1, 3])
def test_uniformity_null_calibration(n):
    rng = np.random.default_rng(77 + n)
    ps = [uniformity_from_points(uniform_points(rng, 1000, n + 1), n).p_value for _ in range(300)]
    if n == 1:
        assert stats.kstest(ps, "uniform").pvalue > 1e-3
    else:
        # Bonferroni makes the combined p conservative: rejections at 5% are at most ~5%
        assert np.mean(np.array(ps) < 0.05) < 0.08


def test_uniformity_detects_concentration():
    rng = np.random.default_rng(3)
    pts = rng.normal([3.0, 0.0, 0.0], 1.0, size=(1000, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    assert uniformity_from_points(pts, 2).p_value < 1e-6


def test_uniformity_needs_enough_records():
    recs = run_ensemble(SimConfig(n=1, schedule=BetaSchedule("constant", 0.0), T=10.0), 5)
    with pytest.raises(DiagnosticsError):
        uniformity_test(recs, 10.0)


@pytest.mark.slow
def test_free_circle_snapshot_is_uniform():
    recs = run_ensemble(SimConfig(n=1, schedule=BetaSchedule("constant", 0.0), T=50.0, seed=60_000), 1000)
    assert uniformity_test(recs, 50.0).p_value > 1e-3


def test_band_check():
    assert band_check(-0.4, 0.5).passed
    assert not band_check(-0.3, 0.5).passed
    assert "limsup" in band_check(-0.4, 0.5).note


def test_median_slope_aggregates():
    recs = [synthetic(GRID, GRID ** s) for s in (-0.4, -0.5, -0.6)]
    med, ests = median_slope(recs, "x0", (10.0, 1e5))
    assert med == pytest.approx(-0.5, abs=1e-10) and len(ests) == 3


@pytest.mark.slow
def test_free_circle_rate_band(free_circle_runs):
    med, _ = median_slope(free_circle_runs, "x0", (1e3, 1e5))
    assert -0.65 <= med <= -0.35


@pytest.mark.slow
def test_moderate_repulsion_shadowing_exponent(repulsion_runs):
    exps = [shadowing_residual(r, "x0", 1.0, (1e3, 1e5)).exponent for r in repulsion_runs]
    assert np.median(exps) <= -0.2
