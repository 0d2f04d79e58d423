import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from droopsim.engine import Models, Scenario, run
from droopsim.errors import InsufficientData, InvalidParams
from droopsim.metrics import (
    MetricsConfig,
    energy_requirement,
    limited_time,
    overshoot,
    rocof,
    settling_time,
    summarize,
    summarize_run,
)

from conftest import models_with_kd
from oracles import trapezoid


def series(t, freq, **extra):
    t = np.asarray(t, float)
    cols = {"t": t, "freq": np.asarray(freq, float)}
    for name in ("p_load", "p_pv", "p_batt", "p_inv", "vdc", "soc"):
        cols[name] = np.asarray(extra.get(name, np.zeros_like(t)), float)
    cols["vdc"] = np.asarray(extra.get("vdc", np.full_like(t, 1500.0)), float)
    cols["limited"] = np.asarray(extra.get("limited", np.zeros(t.size, bool)), bool)
    return cols


T = np.linspace(0.0, 10.0, 10001)


def test_ramp_rate_is_exact():
    assert rocof(series(T, 60.0 - 0.5 * T), 0.3) == pytest.approx(0.5, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.002, 5.0), st.floats(-3.0, 3.0))
def test_ramp_rate_holds_for_any_window(window, slope):
    got = rocof(series(T, 60.0 + slope * T), window)
    # roundoff of the 60 Hz offset scales as eps * 60 / window
    assert got == pytest.approx(abs(slope), rel=1e-9, abs=1e-12 / window)


def test_constant_frequency_has_zero_rate():
    assert rocof(series(T, np.full_like(T, 60.0)), 0.3) == 0.0


def test_window_shorter_than_two_samples_rejected():
    with pytest.raises(InvalidParams):
        rocof(series(T, 60.0 - T), 0.001)


def test_record_shorter_than_window_rejected():
    t = np.linspace(0.0, 0.2, 201)
    with pytest.raises(InsufficientData):
        rocof(series(t, 60.0 - t), 0.3)


def test_sine_rate_is_bounded_by_true_slope():
    f = 60.0 + 0.1 * np.sin(2 * np.pi * 0.5 * T)
    peak = 0.1 * 2 * np.pi * 0.5
    short = rocof(series(T, f), 0.01)
    long = rocof(series(T, f), 0.5)
    assert short == pytest.approx(peak, rel=1e-3)
    assert long < short <= peak


def test_rate_only_counts_after_the_event():
    f = np.where(T < 2.0, 60.0 - 5.0 * T, 50.0)
    assert rocof(series(T, f), 0.1, t_event=3.0) == 0.0


def step_response():
    f = np.where(T < 2.0, 60.0, 59.8 + 0.1 * np.exp(-(T - 2.0) / 0.5))
    return series(T, f)


def test_settling_time_of_exponential():
    # |0.1 exp(-t / 0.5)| falls to 0.02 at t = 0.5 ln 5
    got = settling_time(step_response(), 0.02, 2.0)
    assert got == pytest.approx(0.5 * np.log(5.0), abs=2e-3)


def test_no_settling_when_tail_leaves_band():
    f = 60.0 - 0.05 * T
    assert settling_time(series(T, f), 0.02, 2.0) is None


def test_immediate_settling():
    assert settling_time(series(T, np.full_like(T, 60.0)), 0.02, 2.0) == 0.0


def test_overshoot_direction():
    f = np.where(T <= 2.0, 60.0, 59.8 - 0.1 * np.exp(-(T - 2.0)))
    # first post-event sample is one interval late; final value still carries e^-8
    assert overshoot(series(T, f), 2.0) == pytest.approx(0.1 * (np.exp(-1e-3) - np.exp(-8.0)), rel=1e-9)
    assert overshoot(step_response(), 2.0) == 0.0


def test_energy_of_a_power_block():
    p = np.where((T >= 2.0) & (T <= 5.6), 1.1e5, 1e4)
    got = energy_requirement(series(T, np.full_like(T, 60.0), p_batt=p), 2.0, p_batt_eq=1e4)
    assert got == pytest.approx(100.0, rel=1e-3)


def test_idle_battery_needs_no_energy():
    assert energy_requirement(series(T, np.full_like(T, 60.0)), 2.0) == 0.0


def test_limited_time_counts_intervals():
    lim = (T >= 3.0) & (T < 3.5)
    got = limited_time(series(T, np.full_like(T, 60.0), limited=lim), 2.0)
    assert got == pytest.approx(0.5, abs=1e-9)


def test_config_invariants():
    with pytest.raises(InvalidParams):
        MetricsConfig(t_event=-1.0)
    with pytest.raises(InvalidParams):
        MetricsConfig(t_event=1.0, rocof_window=0.0)


def test_summary_of_synthetic_step():
    m = summarize(step_response(), MetricsConfig(t_event=2.0, k_d=60.0))
    assert m.status == "settled"
    assert m.freq_extremum == pytest.approx(59.8, abs=1e-6)
    assert m.vdc_extremum == 1500.0 and m.p_batt_peak == 0.0


def test_undisturbed_run_stays_at_nominal():
    sc = Scenario(t_end=4.0, t_step=1.0, load_final=2.6e6)
    m = summarize_run(run(sc, Models()), sc, Models())
    assert m.freq_extremum == 60.0 and m.rocof_max == 0.0
    assert m.settling_time == 0.0


# damping trends on the default scenario

def test_rocof_falls_with_damping(default_grid):
    r = [default_grid[k][1].rocof_max for k in (0.0, 60.0, 90.0, 140.0)]
    assert all(b < a for a, b in zip(r, r[1:]))


def test_battery_peak_rises_with_damping(default_grid):
    p = [default_grid[k][1].p_batt_peak for k in (0.0, 60.0, 90.0, 140.0)]
    assert all(b > a for a, b in zip(p, p[1:]))


def test_settling_lengthens_with_damping(default_grid):
    s = [default_grid[k][1].settling_time for k in (60.0, 90.0, 140.0)]
    assert all(b > a for a, b in zip(s, s[1:]))
    assert default_grid[140.0][1].settling_time >= default_grid[60.0][1].settling_time


def test_final_deviation_shrinks_with_damping(default_grid):
    d = [abs(default_grid[k][1].freq_final - 60.0) for k in (60.0, 90.0, 140.0)]
    assert all(b < a for a, b in zip(d, d[1:]))


def test_dc_link_sags_below_reference(default_grid):
    v = [default_grid[k][1].vdc_extremum for k in (0.0, 60.0, 90.0, 140.0)]
    assert default_grid[90.0][1].vdc_extremum < 1500.0
    assert all(b < a for a, b in zip(v, v[1:]))


def test_rocof_at_sixty_near_reported_value(default_grid):
    assert default_grid[60.0][1].rocof_max == pytest.approx(0.604, rel=0.1)


def test_energy_matches_independent_trapezoid(default_grid):
    result, m = default_grid[90.0]
    t = [r.t for r in result.records if r.t >= 2.0]
    p_eq = [r.p_batt for r in result.records if r.t <= 2.0][-1]
    excess = [max(r.p_batt - p_eq, 0.0) for r in result.records if r.t >= 2.0]
    assert m.energy_wh == pytest.approx(trapezoid(t, excess) / 3600.0, rel=1e-9)


def test_metrics_deterministic(default_grid):
    sc = Scenario()
    result, m = default_grid[90.0]
    again = summarize_run(result, sc, models_with_kd(90.0))
    assert again == m
