"""Frequency-droop damping law and the averaged VSC control chain.

The grid-forming converter integrates its own frequency::

    t_a * d(omega)/dt = p_ref - p_out + k_d * (omega_ref - omega)

in per-unit on ``s_base`` and ``f_base``. ``t_a`` scales the otherwise
dimensionless law to seconds. With ``k_d = 0`` the law is a pure integrator
and a sustained power mismatch never settles.
"""
from dataclasses import dataclass, replace
import math

from ._validation import check_finite, check_non_negative, check_positive
from .errors import InvalidParams, Unstable

OMEGA_LOW = 0.9
OMEGA_HIGH = 1.1


@dataclass(frozen=True)
class DroopParams:
    """Droop constants.

    ``p_ref`` of ``None`` means "the pre-event operating point"; the engine
    resolves it from the scenario before a run.
    """

    p_ref: float | None = None
    k_d: float = 60.0
    omega_ref: float = 1.0
    t_a: float = 2.0
    s_base: float = 3.5e6
    f_base: float = 60.0

    def __post_init__(self):
        check_positive("t_a", self.t_a)
        check_positive("s_base", self.s_base)
        check_positive("f_base", self.f_base)
        check_positive("omega_ref", self.omega_ref)
        check_non_negative("k_d", self.k_d)
        if self.p_ref is not None:
            check_finite("p_ref", self.p_ref)


@dataclass(frozen=True)
class DroopState:
    omega: float = 1.0
    theta: float = 0.0


@dataclass(frozen=True)
class VscControlParams:
    """Averaged converter control.

    ``kp_v``/``ki_v`` are carried for the AC voltage loop; with a unity
    power-factor load at average-model fidelity that loop holds the terminal
    at ``v_ac_ref`` and does not enter the active-power dynamics.
    """

    kp_v: float = 0.5
    ki_v: float = 20.0
    t_i: float = 0.002
    i_max: float = 1.2
    v_ac_ref: float = 1.0

    def __post_init__(self):
        for name in ("kp_v", "ki_v", "t_i", "i_max", "v_ac_ref"):
            check_positive(name, getattr(self, name))
        if self.i_max < 1.0:
            raise InvalidParams(f"i_max must be >= 1.0 pu, got {self.i_max}")


def wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped == -math.pi:
        wrapped = math.pi
    return wrapped


def omega_derivative(p, omega, p_out):
    return (p.p_ref - p_out + p.k_d * (p.omega_ref - omega)) / p.t_a


def check_frequency(omega, t=None):
    if not OMEGA_LOW < omega < OMEGA_HIGH:
        raise Unstable(f"frequency left the band: omega = {omega:.6f} pu", t=t)


def droop_step(p, s, p_out, dt):
    """Advance the droop frequency one RK4 step with ``p_out`` held.

    The angle advances with the trapezoid of the step's frequencies, which is
    exact for the RK4 polynomial to the order that matters here.
    """
    check_positive("dt", dt)
    if p.p_ref is None:
        raise InvalidParams("p_ref must be resolved before stepping")
    w = s.omega
    k1 = omega_derivative(p, w, p_out)
    k2 = omega_derivative(p, w + 0.5 * dt * k1, p_out)
    k3 = omega_derivative(p, w + 0.5 * dt * k2, p_out)
    k4 = omega_derivative(p, w + dt * k3, p_out)
    w_new = w + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    # theta integrates omega; apply the same RK4 weights to the omega stages
    w2 = w + 0.5 * dt * k1
    w3 = w + 0.5 * dt * k2
    w4 = w + dt * k3
    d_theta = 2.0 * math.pi * p.f_base * dt / 6.0 * (w + 2.0 * w2 + 2.0 * w3 + w4)
    check_frequency(w_new)
    return replace(s, omega=w_new, theta=wrap_angle(s.theta + d_theta))


def power_limit(p, v_ac_meas):
    return p.i_max * v_ac_meas


def vsc_chain_step(p, droop, v_ac_meas, p_demand, dt, p_prev=0.0):
    """Advance the delivered power one step through the inner-loop lag.

    The converter current limit caps the demand at ``i_max * v_ac_meas``
    before the lag. ``droop`` is accepted for interface symmetry with the
    voltage-source view (the angle the converter synthesises) and is not
    needed by the averaged active-power closure.

    Returns ``(p_out, limited)``.
    """
    check_positive("dt", dt)
    limit = power_limit(p, v_ac_meas)
    target = min(max(p_demand, -limit), limit)
    limited = target != p_demand
    # exact discretisation of the first-order lag for a held target
    alpha = -math.expm1(-dt / p.t_i)
    return p_prev + alpha * (target - p_prev), limited
