import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from driftfusion.core import LyapunovParams, StepRecord
from driftfusion.lyapunov import (
    ScalarRefState,
    check_stationary_convergence,
    drift_free_steps,
    delta_V_direct,
    delta_V_exact,
    detect_uub,
    flag_delta_v_excursions,
    increment_bound,
    negativity_threshold,
    ols_slope,
    pre_boundary_segment,
    random_walk_slope_se,
    scalar_step,
    simulate_scalar,
    worst_case_delta_V,
)


def test_scalar_step_worked_values():
    assert scalar_step(ScalarRefState(0.0, 0.1, 1.0)).e == 0.0
    assert scalar_step(ScalarRefState(1.0, 0.1, 1.0)).e == pytest.approx(0.9, abs=1e-15)
    with pytest.raises(ValueError):
        ScalarRefState(1.0, 2.0, 1.0)
    with pytest.raises(ValueError):
        ScalarRefState(1.0, 0.1, 0.0)


def test_constant_drift_fixed_point():
    trace = simulate_scalar(0.0, 0.1, 1.0, [0.02] * 1000)
    assert trace[-1] == pytest.approx(0.02 / 0.1, rel=1e-12)


def test_delta_v_worked_values():
    assert delta_V_exact(ScalarRefState(0.0, 0.1, 1.0)) == 0.0
    assert delta_V_exact(ScalarRefState(1.0, 0.1, 1.0)) == pytest.approx(-0.095, abs=1e-15)


@settings(max_examples=500)
@given(
    e=st.floats(-10, 10), eta=st.floats(1e-3, 0.5), lam=st.floats(0.1, 1.0), d=st.floats(-0.05, 0.05)
)
def test_delta_v_closed_form_equals_recurrence(e, eta, lam, d):
    s = ScalarRefState(e, eta, lam, d)
    assert delta_V_exact(s) == pytest.approx(delta_V_direct(s), abs=1e-12)


def test_increment_bound_at_equilibrium():
    p = LyapunovParams.scalar_reference(0.5)
    b = increment_bound(0.0, 0.1, 0.0, p)
    assert b >= 0.0 and delta_V_exact(ScalarRefState(0.0, 0.1, 0.5)) <= b


@settings(max_examples=500)
@given(e=st.floats(-5, 5), eta=st.floats(1e-3, 0.5), lam=st.floats(0.1, 1.0))
def test_increment_bound_holds_without_drift(e, eta, lam):
    p = LyapunovParams.scalar_reference(lam)
    assert delta_V_exact(ScalarRefState(e, eta, lam)) <= increment_bound(e, eta, 0.0, p) + 1e-12


def test_increment_bound_frozen_values():
    p = LyapunovParams.scalar_reference(1.0)
    # -0.1*1 + 0.1*1*0.05 + 1*0.01*(1 + 0.0025)
    assert increment_bound(1.0, 0.1, 0.05, p) == pytest.approx(-0.084975, abs=1e-15)
    assert increment_bound(1.0, 0.1, 0.05, p, delta_alpha_norm=0.03) == pytest.approx(-0.054975, abs=1e-15)


def test_increment_bound_below_true_increment_when_drift_present():
    # e = 0: true increment is delta^2 / 2, bound only carries the eta^2-scaled term
    p = LyapunovParams.scalar_reference(1.0)
    s = ScalarRefState(0.0, 0.1, 1.0, 0.05)
    assert delta_V_exact(s) == pytest.approx(0.00125)
    assert increment_bound(0.0, 0.1, 0.05, p) == pytest.approx(2.5e-5)


def test_negativity_threshold_worked_value():
    assert negativity_threshold(1.0, 0.1, 1.0, 0.05) == pytest.approx(0.5 + 0.0125)


@settings(max_examples=500)
@given(e=st.floats(1e-3, 50), eta=st.floats(1e-3, 0.5), lam=st.floats(0.1, 1.0), dmax=st.floats(1e-3, 0.2))
def test_increment_negative_beyond_threshold(e, eta, lam, dmax):
    if e > negativity_threshold(e, eta, lam, dmax) * (1 + 1e-9):
        for sign in (1.0, -1.0):
            assert worst_case_delta_V(sign * e, eta, lam, dmax) < 0.0
            for d in np.linspace(-dmax, dmax, 5):
                assert delta_V_exact(ScalarRefState(sign * e, eta, lam, d)) < 0.0


def test_detect_uub_on_decaying_trace():
    trace = 0.9 ** np.arange(300)
    res = detect_uub(trace, burn_in=100)
    assert res.bound == pytest.approx(0.9**100) and res.bound < 1e-4
    assert res.entered_at == 100


def test_detect_uub_on_oscillating_trace():
    rng = np.random.default_rng(0)
    trace = np.concatenate([np.linspace(1, 0.1, 100), rng.uniform(0.05, 0.1, 500)])
    res = detect_uub(trace, burn_in=100)
    assert 0.05 <= res.bound <= 0.1
    assert res.entered_at is not None and res.entered_at <= 100


def test_detect_uub_rejects_growing_tail():
    trace = np.concatenate([np.full(900, 0.1), np.linspace(0.1, 1.0, 100)])
    assert detect_uub(trace, burn_in=10).entered_at is None
    with pytest.raises(ValueError):
        detect_uub([0.1, 0.2], burn_in=5)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), el=st.floats(0.05, 0.5), dmax=st.floats(0.01, 0.1))
def test_uub_bound_under_bounded_drift(seed, el, dmax):
    rng = np.random.default_rng(seed)
    trace = simulate_scalar(1.0, el, 1.0, rng.uniform(-dmax, dmax, 2000))
    res = detect_uub(trace, burn_in=int(10 / el))
    assert res.bound <= dmax / el + 1e-12


def test_stationary_convergence():
    for e0 in (-3.0, 0.5, 10.0):
        assert check_stationary_convergence(simulate_scalar(e0, 0.1, 1.0, np.zeros(500)), 1e-3, 10)
    rng = np.random.default_rng(1)
    drifting = simulate_scalar(1.0, 0.1, 1.0, rng.uniform(-0.05, 0.05, 500))
    assert not check_stationary_convergence(drifting, 1e-3, 10)
    assert check_stationary_convergence(np.zeros(20), 1e-3, 20)
    assert not check_stationary_convergence(np.zeros(5), 1e-3, 20)


@settings(max_examples=200)
@given(e0=st.floats(1e-2, 100), eta=st.floats(1e-3, 0.5), lam=st.floats(0.1, 1.0))
def test_drift_free_runs_converge_within_predicted_steps(e0, eta, lam):
    k = drift_free_steps(e0, eta, lam)
    trace = simulate_scalar(e0, eta, lam, np.zeros(k))
    assert abs(trace[k]) < 1e-3 * (1 + 1e-9)
    if k >= 2:
        assert abs(trace[k - 2]) >= 1e-3


def test_drift_free_steps_frozen():
    # ceil(ln(1e-3) / ln(0.9)) = ceil(65.56)
    assert drift_free_steps(1.0, 0.1, 1.0) == 66
    assert drift_free_steps(1e-4, 0.1, 1.0) == 0


def test_ols_slope_exact_line():
    slope, se = ols_slope(3.0 - 0.25 * np.arange(10))
    assert slope == pytest.approx(-0.25, abs=1e-14) and se == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        ols_slope([1.0, 2.0])


def test_random_walk_slope_se_matches_monte_carlo():
    rng = np.random.default_rng(2)
    n, sd = 50, 0.3
    slopes = [ols_slope(np.cumsum(np.r_[0.0, rng.normal(0, sd, n - 1)]))[0] for _ in range(4000)]
    assert np.std(slopes) == pytest.approx(random_walk_slope_se(n, sd), rel=0.05)


def test_pre_boundary_segment():
    assert np.array_equal(pre_boundary_segment([0.3, 0.2, 0.0, 0.0]), [0.3, 0.2])
    assert np.array_equal(pre_boundary_segment([0.3, 0.2]), [0.3, 0.2])


def test_flag_delta_v_excursions():
    recs = [StepRecord(t, 0, 1, 0, 0, 0, 1e-3, 0.5, "none", 0, 0, 0, dv) for t, dv in enumerate([0.0, 0.06, 0.01])]
    assert flag_delta_v_excursions(recs, 0.05) == [1]
