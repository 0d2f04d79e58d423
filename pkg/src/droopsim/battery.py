"""Generic lithium-ion battery and its DC-link converter.

Terminal voltage::

    V = E0 - R*i - K * Q/(Q - it) * i_star + A * exp(-B * it)

``it`` is extracted capacity (Ah) and ``i_star`` the low-pass filtered
current. Discharge current is positive. The same expression is used for
charging.

The bidirectional converter is an averaged power actuator: a PI loop on the
DC-link voltage error sets a power command, saturated at the converter
rating, which the converter delivers through a one-pole lag.
"""
from dataclasses import dataclass, replace
import math

from ._validation import check_in_range, check_non_negative, check_positive
from .errors import CapacityExhausted

#: fraction of capacity at which a run is declared drained
CAPACITY_GUARD = 0.999


@dataclass(frozen=True)
class BatteryParams:
    """Pack constants and converter control settings.

    ``kp_dc`` (W/V) and ``ki_dc`` (W/(V*s)) are the DC-link regulator gains,
    ``t_conv`` the converter power lag (s).
    """

    e0: float = 700.0
    r_internal: float = 0.02
    k_pol: float = 0.02
    q_cap: float = 1000.0
    a_exp: float = 50.0
    b_exp: float = 0.05
    t_filter: float = 30.0
    p_rating: float = 1.5e6
    soc_init: float = 0.8
    kp_dc: float = 15000.0
    ki_dc: float = 300000.0
    t_conv: float = 0.005

    def __post_init__(self):
        for name in ("e0", "q_cap", "t_filter", "p_rating", "kp_dc", "t_conv"):
            check_positive(name, getattr(self, name))
        for name in ("r_internal", "k_pol", "a_exp", "b_exp", "ki_dc"):
            check_non_negative(name, getattr(self, name))
        check_in_range("soc_init", self.soc_init, 0.0, 1.0, low_open=True)


@dataclass(frozen=True)
class BatteryState:
    it: float = 0.0
    i_star: float = 0.0
    i: float = 0.0
    v_term: float = 0.0

    def soc(self, params):
        return 1.0 - self.it / params.q_cap


def _check_capacity(p, it, t=None):
    if it >= CAPACITY_GUARD * p.q_cap:
        raise CapacityExhausted(
            f"extracted capacity {it:.6g} Ah reached {CAPACITY_GUARD:.1%} of {p.q_cap} Ah",
            t=t,
        )


def open_circuit_term(p, it, i_star):
    """Voltage terms that do not depend on the instantaneous current."""
    return (
        p.e0
        - p.k_pol * p.q_cap / (p.q_cap - it) * i_star
        + p.a_exp * math.exp(-p.b_exp * it)
    )


def terminal_voltage(p, s):
    _check_capacity(p, s.it)
    return open_circuit_term(p, s.it, s.i_star) - p.r_internal * s.i


def current_for_power(p, it, i_star, power):
    """Battery current delivering ``power`` (W) at the terminals.

    Solves ``power = (E - R*i) * i`` on the low-current branch. Requests
    beyond the pack's maximum deliverable power return the current at
    that maximum.
    """
    e = open_circuit_term(p, it, i_star)
    disc = e * e - 4.0 * p.r_internal * power
    if disc < 0.0:
        return e / (2.0 * p.r_internal)
    return 2.0 * power / (e + math.sqrt(disc))


def battery_step(p, s, i_cmd, dt):
    """Advance capacity and filter state by one explicit step of ``dt``."""
    check_positive("dt", dt)
    it = max(s.it + i_cmd * dt / 3600.0, 0.0)
    i_star = s.i_star + (dt / p.t_filter) * (i_cmd - s.i_star)
    _check_capacity(p, it)
    v = open_circuit_term(p, it, i_star) - p.r_internal * i_cmd
    return BatteryState(it=it, i_star=i_star, i=i_cmd, v_term=v)


def initial_state(p, power=0.0):
    """Battery at ``soc_init`` carrying a steady ``power`` with settled filter.

    The filter equilibrium ``i_star = i`` makes the voltage depend on the
    current through both resistive terms, so the current is found by damped
    fixed-point iteration on ``i = power / V(i)``.
    """
    it = (1.0 - p.soc_init) * p.q_cap
    _check_capacity(p, it)
    i = 0.0
    for _ in range(500):
        i_new = current_for_power(p, it, i, power)
        if abs(i_new - i) <= 1e-13 * max(1.0, abs(i_new)):
            i = i_new
            break
        i = 0.5 * (i + i_new)
    s = BatteryState(it=it, i_star=i, i=i)
    return replace(s, v_term=terminal_voltage(p, s))


# ---------------------------------------------------------------------------
# DC-link regulator

def regulator_output(p, error, integ):
    """PI command for a voltage error (ref - meas) and integrator value.

    Returns ``(command, integrating)``; ``integrating`` is False when the
    command is saturated and the error would drive it further (anti-windup).
    """
    raw = p.kp_dc * error + p.ki_dc * integ
    if raw > p.p_rating:
        return p.p_rating, error < 0
    if raw < -p.p_rating:
        return -p.p_rating, error > 0
    return raw, True


def dclink_regulator_step(p, vdc_meas, vdc_ref, integ, dt):
    """One explicit update of the DC-link PI regulator.

    A sagging link (``vdc_meas < vdc_ref``) yields a positive command, i.e.
    battery discharge into the link.
    """
    check_positive("vdc_ref", vdc_ref)
    check_positive("dt", dt)
    error = vdc_ref - vdc_meas
    candidate = integ + error * dt
    cmd, integrating = regulator_output(p, error, candidate)
    # conditional integration: the command saturates, the integrator holds
    return cmd, candidate if integrating else integ
