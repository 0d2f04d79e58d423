"""Single-diode PV array, averaged boost stage and P&O maximum power tracking.

The array is built from identical modules. Each module follows the
five-parameter single-diode equation

    I = Ipv - I0 * (exp((V + Rs*I) / (a*Vt)) - 1) - (V + Rs*I) / Rp

with ``Vt = Ncells * k * T / q``. ``fit_single_diode`` extracts
(Ipv, I0, Rp, Rs) from datasheet values for a fixed ideality ``a``: for each
trial ``Rs`` the remaining three unknowns are solved so the curve passes
exactly through short circuit, open circuit and the rated maximum power
point, then ``Rs`` is raised from zero until the curve's maximum power drops
to the datasheet value.

Array voltage is ``n_s`` times module voltage and array current ``n_p``
times module current.
"""
from dataclasses import dataclass, replace
import math

import numpy as np
from scipy import constants
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    check_finite,
    check_in_range,
    check_non_negative,
    check_positive,
    check_positive_int,
)
from .errors import InvalidParams, NonConvergence, OutOfRange

BOLTZMANN = constants.k
CHARGE = constants.e


@dataclass(frozen=True)
class PvArrayParams:
    """Datasheet constants of one module plus the array layout.

    Temperature coefficients are per module (V/K, A/K). ``n_cells`` is the
    number of series cells inside one module; it sets the module thermal
    voltage.
    """

    k_v: float = -0.123
    k_i: float = 0.0032
    v_ocn: float = 32.9
    i_scn: float = 8.2
    p_max_e: float = 200.14
    i_mp: float = 7.6
    v_mp: float = 26.3
    n_p: int = 500
    n_s: int = 24
    t_n: float = 298.15
    g_n: float = 1000.0
    n_cells: int = 54

    def __post_init__(self):
        for name in ("v_ocn", "i_scn", "p_max_e", "i_mp", "v_mp", "t_n", "g_n"):
            check_positive(name, getattr(self, name))
        check_finite("k_v", self.k_v)
        check_finite("k_i", self.k_i)
        for name in ("n_p", "n_s", "n_cells"):
            check_positive_int(name, getattr(self, name))
        if not self.v_mp < self.v_ocn:
            raise InvalidParams(f"v_mp ({self.v_mp}) must be below v_ocn ({self.v_ocn})")
        if not self.i_mp < self.i_scn:
            raise InvalidParams(f"i_mp ({self.i_mp}) must be below i_scn ({self.i_scn})")
        mismatch = abs(self.v_mp * self.i_mp - self.p_max_e) / self.p_max_e
        if mismatch >= 0.01:
            raise InvalidParams(
                f"v_mp * i_mp differs from p_max_e by {mismatch:.2%} (limit 1%)"
            )


#: Kyocera KC200GT module at 25 degC / 1000 W/m2, 24 x 500 array.
KC200GT = PvArrayParams()


@dataclass(frozen=True)
class PvDerivedParams:
    i_pv_n: float
    i_0: float
    a: float
    r_s: float
    r_p: float
    v_t_n: float

    def __post_init__(self):
        if self.r_s < 0:
            raise InvalidParams(f"r_s must be >= 0, got {self.r_s}")
        if not self.r_p > self.r_s:
            raise InvalidParams(f"r_p ({self.r_p}) must exceed r_s ({self.r_s})")
        if not self.i_0 > 0:
            raise InvalidParams(f"i_0 must be > 0, got {self.i_0}")
        check_in_range("a", self.a, 1.0, 1.5)
        check_positive("v_t_n", self.v_t_n)


@dataclass(frozen=True)
class PvOperatingPoint:
    voltage: float
    current: float
    power: float
    irradiance: float
    temperature: float


@dataclass(frozen=True)
class MpptState:
    """Perturb-and-observe tracker memory.

    ``v_max`` is the array open-circuit voltage used to clamp ``v_ref``.
    """

    v_ref: float
    v_max: float
    step: float = 2.0
    period: float = 0.01
    last_power: float = 0.0
    last_voltage: float = 0.0

    def __post_init__(self):
        check_positive("step", self.step)
        check_positive("period", self.period)
        check_positive("v_max", self.v_max)
        check_in_range("v_ref", self.v_ref, 0.0, self.v_max)


def thermal_voltage(n_cells, temperature):
    return n_cells * BOLTZMANN * temperature / CHARGE


# ---------------------------------------------------------------------------
# module-level curve evaluation

def _module_current(v, i_pv, i_0, a_vt, r_s, g_p, tol):
    """Solve the implicit diode equation for module current.

    Safeguarded Newton on the bracket [0, i_pv]: the residual is strictly
    decreasing in current, so bisection fallback always converges. ``v`` may
    be a scalar or an array.
    """
    v = np.asarray(v, dtype=float)
    lo = np.zeros_like(v)
    hi = np.full_like(v, i_pv)
    cur = np.full_like(v, 0.5 * i_pv)
    for _ in range(200):
        vd = v + r_s * cur
        ex = np.exp(vd / a_vt)
        f = i_pv - i_0 * (ex - 1.0) - vd * g_p - cur
        if np.all(np.abs(f) < tol):
            break
        lo = np.where(f > 0, cur, lo)
        hi = np.where(f < 0, cur, hi)
        df = -i_0 * ex * r_s / a_vt - r_s * g_p - 1.0
        newton = cur - f / df
        inside = (newton > lo) & (newton < hi)
        cur = np.where(inside, newton, 0.5 * (lo + hi))
    else:
        raise NonConvergence("diode equation did not converge")
    return cur


def _module_residual_at_zero_current(v, i_pv, i_0, a_vt, g_p):
    return i_pv - i_0 * (math.exp(v / a_vt) - 1.0) - v * g_p


def _boundary_solve(params, a_vt, r_s, i_mp_e):
    """Solve (Ipv, I0, 1/Rp) so the curve hits Isc, Voc and (Vmp, i_mp_e).

    All three conditions are linear in the unknowns once ``r_s`` is fixed.
    """
    isc, voc, vmp = params.i_scn, params.v_ocn, params.v_mp
    rows = []
    rhs = []
    for v, i in ((0.0, isc), (voc, 0.0), (vmp, i_mp_e)):
        vd = v + r_s * i
        rows.append([1.0, -math.expm1(vd / a_vt), -vd])
        rhs.append(i)
    i_pv, i_0, g_p = np.linalg.solve(np.array(rows), np.array(rhs))
    return float(i_pv), float(i_0), float(g_p)


def _max_power(i_pv, i_0, a_vt, r_s, g_p, v_oc, tol):
    """Golden-section search for the module maximum power on [0, v_oc]."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    lo, hi = 0.0, v_oc

    def power(v):
        return v * float(_module_current(v, i_pv, i_0, a_vt, r_s, g_p, tol))

    x1 = hi - inv_phi * (hi - lo)
    x2 = lo + inv_phi * (hi - lo)
    p1, p2 = power(x1), power(x2)
    while hi - lo > 1e-9 * v_oc:
        if p1 < p2:
            lo, x1, p1 = x1, x2, p2
            x2 = lo + inv_phi * (hi - lo)
            p2 = power(x2)
        else:
            hi, x2, p2 = x2, x1, p1
            x1 = hi - inv_phi * (hi - lo)
            p1 = power(x1)
    v = 0.5 * (lo + hi)
    return v, power(v)


def fit_single_diode(params, tol=1e-6, a=1.3, rs_increment=1e-2, max_iter=20000):
    """Extract single-diode constants from datasheet values.

    Parameters
    ----------
    params : PvArrayParams
    tol : float
        Relative tolerance on the maximum-power match, in (0, 1e-2].
    a : float
        Diode ideality constant, held fixed during the fit.
    rs_increment : float
        Step of the upward series-resistance sweep (ohm). A sign change of
        the power error inside one increment is refined by bisection.
    max_iter : int
        Cap on sweep plus refinement iterations.

    Returns
    -------
    PvDerivedParams

    Raises
    ------
    NonConvergence
        If the sweep exhausts ``max_iter`` or drives the shunt resistance
        negative, which means the datasheet values are not consistent with
        the model.
    """
    if not isinstance(params, PvArrayParams):
        raise InvalidParams("params must be a PvArrayParams")
    check_in_range("tol", tol, 0.0, 1e-2, low_open=True)
    check_in_range("a", a, 1.0, 1.5)
    check_positive("rs_increment", rs_increment)

    a_vt = a * thermal_voltage(params.n_cells, params.t_n)
    i_mp_e = params.p_max_e / params.v_mp
    curve_tol = 1e-12 * params.i_scn

    def evaluate(r_s):
        i_pv, i_0, g_p = _boundary_solve(params, a_vt, r_s, i_mp_e)
        if not (g_p > 0 and i_0 > 0 and 1.0 / g_p > r_s):
            raise NonConvergence(
                f"shunt resistance became non-physical at r_s={r_s:.6g} ohm; "
                "datasheet values are inconsistent"
            )
        v_max, p_max = _max_power(i_pv, i_0, a_vt, r_s, g_p, params.v_ocn, curve_tol)
        err = (p_max - params.p_max_e) / params.p_max_e
        return err, v_max - params.v_mp, (i_pv, i_0, g_p)

    # The curve is pinned through (v_mp, p_max_e / v_mp), so its maximum
    # power never drops below p_max_e; the match is reached when the
    # maximum sits at v_mp. Raising r_s moves the maximum to lower voltage.
    r_s = 0.0
    err, offset, sol = evaluate(r_s)
    if err > tol and offset < 0:
        raise NonConvergence("maximum power point lies below v_mp even with r_s = 0")
    iterations = 0
    lo = r_s
    while err > tol and offset > 0:
        iterations += 1
        if iterations > max_iter:
            raise NonConvergence(f"r_s sweep exceeded {max_iter} iterations")
        lo = r_s
        r_s += rs_increment
        err, offset, sol = evaluate(r_s)
    hi = r_s
    while err > tol:
        iterations += 1
        if iterations > max_iter:
            raise NonConvergence(f"r_s refinement exceeded {max_iter} iterations")
        r_s = 0.5 * (lo + hi)
        err, offset, sol = evaluate(r_s)
        if offset > 0:
            lo = r_s
        else:
            hi = r_s
    i_pv, i_0, g_p = sol
    return PvDerivedParams(
        i_pv_n=i_pv,
        i_0=i_0,
        a=a,
        r_s=r_s,
        r_p=1.0 / g_p,
        v_t_n=thermal_voltage(params.n_cells, params.t_n),
    )


# ---------------------------------------------------------------------------
# conditions-corrected curve

def _module_constants(derived, params, irradiance, temperature):
    """Return (i_pv, i_0, a_vt, g_p, v_oc) of one module at the conditions."""
    d_t = temperature - params.t_n
    a_vt = derived.a * thermal_voltage(params.n_cells, temperature)
    g_p = 1.0 / derived.r_p
    i_pv_g = derived.i_pv_n + params.k_i * d_t
    v_oc_n = params.v_ocn + params.k_v * d_t
    # saturation current keeps the open-circuit point on the corrected Voc
    i_0 = (i_pv_g - v_oc_n * g_p) / math.expm1(v_oc_n / a_vt)
    i_pv = i_pv_g * irradiance / params.g_n
    return i_pv, i_0, a_vt, g_p


def _check_conditions(irradiance, temperature):
    check_non_negative("irradiance", irradiance)
    if not temperature > 0:
        raise OutOfRange(f"temperature must be > 0 K, got {temperature}")


def open_circuit_voltage(derived, params, irradiance=None, temperature=None):
    """Array open-circuit voltage (V) at the given conditions."""
    irradiance = params.g_n if irradiance is None else irradiance
    temperature = params.t_n if temperature is None else temperature
    _check_conditions(irradiance, temperature)
    if irradiance == 0:
        return 0.0
    i_pv, i_0, a_vt, g_p = _module_constants(derived, params, irradiance, temperature)
    lo, hi = 0.0, a_vt * math.log1p(i_pv / i_0)
    # residual is concave decreasing: bisect then polish
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _module_residual_at_zero_current(mid, i_pv, i_0, a_vt, g_p) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * hi:
            break
    return lo * params.n_s


def array_current(derived, params, voltage, irradiance=None, temperature=None):
    """Vectorised array current for an array of terminal voltages.

    No range checks; callers pass voltages inside [0, Voc].
    """
    irradiance = params.g_n if irradiance is None else irradiance
    temperature = params.t_n if temperature is None else temperature
    v_mod = np.asarray(voltage, dtype=float) / params.n_s
    if irradiance == 0:
        return np.zeros_like(v_mod)
    i_pv, i_0, a_vt, g_p = _module_constants(derived, params, irradiance, temperature)
    tol = 1e-9 * params.i_scn / params.n_p
    return params.n_p * _module_current(v_mod, i_pv, i_0, a_vt, derived.r_s, g_p, tol)


def solve_iv(derived, params, voltage, irradiance=None, temperature=None):
    """Operating point of the array at a terminal voltage.

    Raises
    ------
    OutOfRange
        For negative voltage or irradiance, non-positive temperature, or a
        voltage above the open-circuit voltage at the given conditions.
    """
    irradiance = params.g_n if irradiance is None else irradiance
    temperature = params.t_n if temperature is None else temperature
    voltage = check_finite("voltage", voltage)
    try:
        _check_conditions(irradiance, temperature)
    except InvalidParams as exc:
        raise OutOfRange(str(exc)) from exc
    if voltage < 0:
        raise OutOfRange(f"voltage must be >= 0, got {voltage}")
    if irradiance == 0:
        if voltage > 0:
            raise OutOfRange("no irradiance: open-circuit voltage is 0 V")
        return PvOperatingPoint(voltage, 0.0, 0.0, irradiance, temperature)
    i_pv, i_0, a_vt, g_p = _module_constants(derived, params, irradiance, temperature)
    v_mod = voltage / params.n_s
    if _module_residual_at_zero_current(v_mod, i_pv, i_0, a_vt, g_p) < -1e-9 * params.i_scn:
        raise OutOfRange(f"voltage {voltage} V is above open circuit")
    tol = 1e-9 * params.i_scn / params.n_p
    i_mod = float(_module_current(v_mod, i_pv, i_0, a_vt, derived.r_s, g_p, tol))
    current = max(i_mod, 0.0) * params.n_p
    return PvOperatingPoint(voltage, current, voltage * current, irradiance, temperature)


def maximum_power_point(derived, params, irradiance=None, temperature=None):
    """Array (voltage, power) at the maximum power point."""
    irradiance = params.g_n if irradiance is None else irradiance
    temperature = params.t_n if temperature is None else temperature
    _check_conditions(irradiance, temperature)
    if irradiance == 0:
        return 0.0, 0.0
    i_pv, i_0, a_vt, g_p = _module_constants(derived, params, irradiance, temperature)
    v_oc = open_circuit_voltage(derived, params, irradiance, temperature) / params.n_s
    v, p = _max_power(i_pv, i_0, a_vt, derived.r_s, g_p, v_oc, 1e-12 * params.i_scn)
    return v * params.n_s, p * params.n_s * params.n_p


# ---------------------------------------------------------------------------
# MPPT

def mppt_step(state, measured):
    """One perturb-and-observe update.

    If power rose since the previous call the last perturbation direction is
    kept, otherwise it is reversed. On the very first call (no voltage
    change recorded) the tracker moves upward.
    """
    d_v = measured.voltage - state.last_voltage
    d_p = measured.power - state.last_power
    last_dir = 1.0 if d_v >= 0 else -1.0
    direction = last_dir if d_p > 0 else -last_dir
    v_ref = min(max(state.v_ref + direction * state.step, 0.0), state.v_max)
    return replace(
        state, v_ref=v_ref, last_power=measured.power, last_voltage=measured.voltage
    )


def boost_output_power(point):
    """Averaged lossless boost stage: DC-link injection equals array power."""
    return point.power


# ---------------------------------------------------------------------------
# estimator front end

class SingleDiodeArray(BaseEstimator):
    """Fit/predict wrapper around the single-diode array model.

    Parameters
    ----------
    ideality : float, default 1.3
        Diode ideality constant held fixed during extraction.
    tol : float, default 1e-6
        Relative maximum-power tolerance of the extraction.
    irradiance, temperature : float
        Conditions used by :meth:`predict` (W/m2, K).

    Attributes
    ----------
    params_ : PvArrayParams
    derived_ : PvDerivedParams
    v_oc_ : float
        Array open-circuit voltage at the prediction conditions.
    """

    def __init__(self, ideality=1.3, tol=1e-6, irradiance=1000.0, temperature=298.15):
        self.ideality = ideality
        self.tol = tol
        self.irradiance = irradiance
        self.temperature = temperature

    def fit(self, params=KC200GT, y=None):
        self.params_ = params
        self.derived_ = fit_single_diode(params, tol=self.tol, a=self.ideality)
        self.v_oc_ = open_circuit_voltage(
            self.derived_, params, self.irradiance, self.temperature
        )
        return self

    def predict(self, voltage):
        """Array current (A) for terminal voltages (V)."""
        check_is_fitted(self, "derived_")
        v = np.asarray(voltage, dtype=float)
        if np.any(v < 0) or np.any(v > self.v_oc_ * (1 + 1e-12)):
            raise OutOfRange("voltages must lie in [0, v_oc_]")
        cur = array_current(
            self.derived_, self.params_, v, self.irradiance, self.temperature
        )
        return np.maximum(cur, 0.0)

    def power(self, voltage):
        return np.asarray(voltage, dtype=float) * self.predict(voltage)

    def maximum_power_point(self):
        check_is_fitted(self, "derived_")
        return maximum_power_point(
            self.derived_, self.params_, self.irradiance, self.temperature
        )
