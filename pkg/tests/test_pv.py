import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from droopsim.errors import InvalidParams, NonConvergence, OutOfRange
from droopsim.pv import (
    KC200GT,
    MpptState,
    PvArrayParams,
    PvOperatingPoint,
    SingleDiodeArray,
    array_current,
    fit_single_diode,
    maximum_power_point,
    mppt_step,
    open_circuit_voltage,
    solve_iv,
    thermal_voltage,
)

from oracles import dense_scan, module_current


@pytest.fixture(scope="module")
def derived():
    return fit_single_diode(KC200GT)


@pytest.fixture(scope="module")
def scan(derived):
    return dense_scan(derived, KC200GT)


def module(derived, v):
    return solve_iv(derived, KC200GT, v * KC200GT.n_s).current / KC200GT.n_p


def test_fit_hits_the_three_datasheet_points(derived):
    tol = 1e-6
    assert module(derived, 0.0) == pytest.approx(8.2, abs=tol * 8.2)
    assert module(derived, 32.9) == pytest.approx(0.0, abs=tol * 8.2)
    p_mp = 26.3 * module(derived, 26.3)
    assert p_mp == pytest.approx(200.14, rel=tol)


def test_fitted_constants_are_physical(derived):
    assert derived.r_s >= 0
    assert derived.r_p > derived.r_s
    assert derived.i_0 > 0
    assert derived.a == 1.3
    assert derived.v_t_n == pytest.approx(thermal_voltage(54, 298.15))


def test_fit_maximum_sits_at_datasheet_voltage(derived):
    v, p = maximum_power_point(derived, KC200GT)
    assert v / KC200GT.n_s == pytest.approx(26.3, abs=0.3)
    assert p == pytest.approx(500 * 24 * 200.14, rel=1e-2)


def test_curve_matches_brentq_oracle(derived):
    for v in (0.0, 5.0, 20.0, 26.3, 30.0, 32.5):
        expected = module_current(v, derived.i_pv_n, derived.i_0, derived.a, derived.r_s,
                                  derived.r_p, 54, 298.15)
        assert module(derived, v) == pytest.approx(expected, abs=1e-9 * 8.2)


def test_array_short_circuit_current(derived):
    point = solve_iv(derived, KC200GT, 0.0, 1000.0, 298.15)
    assert point.current == pytest.approx(4100.0, rel=1e-9)
    assert point.power == 0.0


def test_zero_irradiance_gives_no_current(derived):
    point = solve_iv(derived, KC200GT, 0.0, 0.0, 298.15)
    assert point.current == 0.0 and point.power == 0.0
    assert open_circuit_voltage(derived, KC200GT, 0.0, 298.15) == 0.0


def test_array_power_at_datasheet_voltage(derived, scan):
    point = solve_iv(derived, KC200GT, 24 * 26.3)
    assert point.power == pytest.approx(500 * 24 * 200.14, rel=1e-2)
    va, _, pa = scan
    assert point.power == pytest.approx(np.interp(24 * 26.3, va, pa), rel=1e-6)


def test_mpp_matches_dense_scan_within_one_cell(derived, scan):
    va, _, pa = scan
    v, p = maximum_power_point(derived, KC200GT)
    k = int(np.argmax(pa))
    assert abs(v - va[k]) <= va[1] - va[0]
    assert p >= pa[k] * (1 - 1e-12)


def test_power_is_unimodal(scan):
    _, _, pa = scan
    k = int(np.argmax(pa))
    assert np.all(np.diff(pa[: k + 1]) > 0)
    assert np.all(np.diff(pa[k:]) < 0)


def test_operating_point_power_is_product(derived):
    point = solve_iv(derived, KC200GT, 600.0)
    assert point.power == point.voltage * point.current


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_current_non_increasing_in_voltage(derived, x, y):
    v_oc = open_circuit_voltage(derived, KC200GT)
    lo, hi = sorted((x * v_oc, y * v_oc))
    assert solve_iv(derived, KC200GT, lo).current >= solve_iv(derived, KC200GT, hi).current - 1e-9


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 32.0), st.integers(1, 800), st.integers(1, 60))
def test_array_scales_with_layout(derived, v_mod, n_p, n_s):
    layout = replace(KC200GT, n_p=n_p, n_s=n_s)
    base = solve_iv(derived, KC200GT, v_mod * KC200GT.n_s)
    scaled = solve_iv(derived, layout, v_mod * n_s)
    assert scaled.current == pytest.approx(base.current / 500 * n_p, rel=1e-9, abs=1e-9)


def test_temperature_and_irradiance_corrections(derived):
    v_oc_hot = open_circuit_voltage(derived, KC200GT, 1000.0, 298.15 + 10)
    assert v_oc_hot / 24 == pytest.approx(32.9 - 1.23, rel=1e-9)
    half = solve_iv(derived, KC200GT, 0.0, 500.0)
    assert half.current == pytest.approx(2050.0, rel=1e-6)


@pytest.mark.parametrize("voltage", [-1.0, 1e4])
def test_out_of_range_voltage(derived, voltage):
    with pytest.raises(OutOfRange):
        solve_iv(derived, KC200GT, voltage)


def test_non_positive_temperature_rejected(derived):
    with pytest.raises(OutOfRange):
        solve_iv(derived, KC200GT, 10.0, 1000.0, 0.0)


def test_datasheet_consistency_is_checked():
    with pytest.raises(InvalidParams):
        PvArrayParams(p_max_e=220.0)
    with pytest.raises(InvalidParams):
        PvArrayParams(v_mp=40.0)
    with pytest.raises(InvalidParams):
        PvArrayParams(n_p=0)


@pytest.mark.parametrize("tol", [0.0, 0.02])
def test_fit_rejects_bad_tolerance(tol):
    with pytest.raises(InvalidParams):
        fit_single_diode(KC200GT, tol=tol)


def ideal_datasheet():
    """Datasheet generated by a zero-series-resistance curve."""
    i_pv, i_0, a, r_p = 8.0, 1e-9, 1.2, 400.0
    a_vt = a * thermal_voltage(54, 298.15)

    def cur(v):
        return i_pv - i_0 * math.expm1(v / a_vt) - v / r_p

    from scipy.optimize import brentq, minimize_scalar
    v_oc = brentq(cur, 0.0, 60.0, xtol=1e-14)
    res = minimize_scalar(lambda v: -v * cur(v), bounds=(0, v_oc), method="bounded",
                          options={"xatol": 1e-12})
    v_mp = float(res.x)
    return PvArrayParams(v_ocn=v_oc, i_scn=i_pv, v_mp=v_mp, i_mp=cur(v_mp),
                         p_max_e=v_mp * cur(v_mp)), a


def test_zero_resistance_curve_fits_at_first_step():
    params, a = ideal_datasheet()
    derived = fit_single_diode(params, tol=1e-3, a=a)
    assert derived.r_s == 0.0


def test_inconsistent_datasheet_does_not_converge():
    # maximum pinned far below the knee: even r_s = 0 puts the MPP lower
    with pytest.raises(NonConvergence):
        fit_single_diode(replace(KC200GT, v_mp=31.5, i_mp=6.35, p_max_e=200.0))


def test_mppt_keeps_direction_when_power_rises():
    state = MpptState(v_ref=602.0, v_max=789.6, last_power=100e3, last_voltage=600.0)
    nxt = mppt_step(state, PvOperatingPoint(602.0, 0.0, 110e3, 1000.0, 298.15))
    assert nxt.v_ref == 604.0


def test_mppt_reverses_when_power_falls():
    state = MpptState(v_ref=602.0, v_max=789.6, last_power=110e3, last_voltage=600.0)
    nxt = mppt_step(state, PvOperatingPoint(602.0, 0.0, 100e3, 1000.0, 298.15))
    assert nxt.v_ref == 600.0
    assert nxt.last_power == 100e3 and nxt.last_voltage == 602.0


def test_mppt_clamps_to_open_circuit():
    state = MpptState(v_ref=789.0, v_max=789.6, last_power=0.0, last_voltage=788.0)
    nxt = mppt_step(state, PvOperatingPoint(789.0, 0.0, 1.0, 1000.0, 298.15))
    assert nxt.v_ref == 789.6
    low = MpptState(v_ref=1.0, v_max=789.6, last_power=5.0, last_voltage=0.0)
    assert mppt_step(low, PvOperatingPoint(1.0, 0.0, 1.0, 1000.0, 298.15)).v_ref == 0.0


def test_mppt_state_invariants():
    with pytest.raises(InvalidParams):
        MpptState(v_ref=10.0, v_max=100.0, step=0.0)
    with pytest.raises(InvalidParams):
        MpptState(v_ref=200.0, v_max=100.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 0.99))
def test_mppt_converges_from_any_start(derived, frac):
    v_oc = open_circuit_voltage(derived, KC200GT)
    v_mpp, _ = maximum_power_point(derived, KC200GT)
    step = 2.0
    state = MpptState(v_ref=frac * v_oc, v_max=v_oc, step=step)
    n = math.ceil(v_oc / step)
    trace = []
    for _ in range(n + 50):
        state = mppt_step(state, solve_iv(derived, KC200GT, state.v_ref))
        trace.append(state.v_ref)
    assert all(abs(v - v_mpp) <= 2 * step for v in trace[n:])


def test_estimator_matches_functions(derived):
    est = SingleDiodeArray().fit(KC200GT)
    v = np.array([0.0, 300.0, 631.2, 780.0])
    expected = [solve_iv(derived, KC200GT, x).current for x in v]
    assert est.predict(v) == pytest.approx(expected, rel=1e-9, abs=1e-9)
    assert est.power(v) == pytest.approx(v * np.array(expected), rel=1e-9, abs=1e-6)
    assert est.maximum_power_point() == pytest.approx(maximum_power_point(derived, KC200GT))


def test_estimator_params_roundtrip():
    est = SingleDiodeArray(ideality=1.2, tol=1e-4)
    assert est.get_params()["ideality"] == 1.2
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert not hasattr(twin, "derived_")
    with pytest.raises(OutOfRange):
        est.fit().predict([-1.0])


def test_array_current_vectorised(derived):
    v = np.linspace(0, 780, 7)
    got = array_current(derived, KC200GT, v)
    assert got == pytest.approx([solve_iv(derived, KC200GT, x).current for x in v], rel=1e-9, abs=1e-9)
