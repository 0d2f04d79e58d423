"""Fixed-step RK4 simulation of the PV / battery / grid-forming converter plant.

Continuous state (per-unit on the droop bases unless noted):

* ``omega``, ``theta``   converter frequency and angle
* ``p_gov``              AC-system equivalent mechanical power
* ``p_inv``              converter delivered power (inner-loop lag)
* ``vdc``  (V)           DC-link voltage
* ``integ`` (V*s)        DC-link regulator integrator
* ``p_batt`` (W)         battery converter delivered power (one-pole lag)
* ``it`` (Ah), ``i_star`` (A)  battery capacity and filter
* ``e_net`` (J)          integral of the DC-link power balance

The AC bus carries the load, the converter and an optional lumped AC-system
equivalent (inertia ``ac_inertia``, governor droop gain ``ac_droop_gain``
with lag ``ac_gov_time``). Both sources are taken as rigidly synchronised,
so the converter's share of a load change follows from its own droop law
and the equivalent's swing equation. With all AC-system constants at zero
the converter carries the whole load.

Discrete events happen on the step grid: the load switches at the step
nearest ``t_step`` and the MPPT updates every ``period / dt`` steps. Between
events each step is plain RK4, so trajectories are bit-identical for
identical inputs.
"""
from dataclasses import dataclass, field, replace
from functools import lru_cache
import math

from . import battery as bat
from .battery import BatteryParams, BatteryState
from .droop import (
    DroopParams,
    DroopState,
    VscControlParams,
    check_frequency,
    wrap_angle,
)
from .errors import (
    CapacityExhausted,
    DcLinkCollapse,
    InvalidParams,
    NoEquilibrium,
    RunAborted,
)
from .pv import (
    KC200GT,
    MpptState,
    PvArrayParams,
    fit_single_diode,
    mppt_step,
    open_circuit_voltage,
    solve_iv,
)
from ._validation import (
    check_in_range,
    check_non_negative,
    check_positive,
    check_positive_int,
)

SETTLED = "settled"
NON_SETTLING = "non-settling"
INFEASIBLE = "infeasible"

DEFAULT_SETTLE_BAND = 0.02  # Hz


@dataclass(frozen=True)
class Scenario:
    t_end: float = 10.0
    dt: float = 1e-4
    load_initial: float = 2.6e6
    load_final: float = 3.4e6
    t_step: float = 2.0
    vdc_ref: float = 1500.0
    record_decimation: int = 10
    irradiance: float = 1000.0
    temperature: float = 298.15

    def __post_init__(self):
        check_in_range("dt", self.dt, 0.0, 1e-3, low_open=True)
        check_positive("t_end", self.t_end)
        check_non_negative("t_step", self.t_step)
        if not self.t_step < self.t_end:
            raise InvalidParams(f"t_step ({self.t_step}) must be before t_end ({self.t_end})")
        check_positive("load_initial", self.load_initial)
        check_positive("load_final", self.load_final)
        check_positive("vdc_ref", self.vdc_ref)
        check_positive_int("record_decimation", self.record_decimation)
        check_positive("irradiance", self.irradiance)
        check_positive("temperature", self.temperature)

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))

    @property
    def step_index(self):
        return int(round(self.t_step / self.dt))


@dataclass(frozen=True)
class NetworkParams:
    """DC-link capacitance and the AC-system equivalent.

    ``ac_inertia`` is 2H of the equivalent on the converter power base (s),
    ``ac_droop_gain`` its governor gain (pu power per pu frequency),
    ``ac_gov_time`` the governor lag (s) and ``ac_p_sched`` its scheduled
    pre-event output (W).
    """

    c_dc: float = 0.1
    ac_inertia: float = 2.0
    ac_droop_gain: float = 1000.0
    ac_gov_time: float = 10.0
    ac_p_sched: float = 0.0

    def __post_init__(self):
        check_positive("c_dc", self.c_dc)
        check_non_negative("ac_inertia", self.ac_inertia)
        check_non_negative("ac_droop_gain", self.ac_droop_gain)
        check_positive("ac_gov_time", self.ac_gov_time)
        check_non_negative("ac_p_sched", self.ac_p_sched)

    @property
    def islanded(self):
        return self.ac_inertia == 0 and self.ac_droop_gain == 0 and self.ac_p_sched == 0


@dataclass(frozen=True)
class PvPlant:
    params: PvArrayParams = KC200GT
    ideality: float = 1.3
    mppt_step: float = 2.0
    mppt_period: float = 0.01
    mppt_enabled: bool = True

    def __post_init__(self):
        check_in_range("ideality", self.ideality, 1.0, 1.5)
        check_positive("mppt_step", self.mppt_step)
        check_positive("mppt_period", self.mppt_period)


@dataclass(frozen=True)
class Models:
    pv: PvPlant = field(default_factory=PvPlant)
    battery: BatteryParams = field(default_factory=BatteryParams)
    droop: DroopParams = field(default_factory=DroopParams)
    vsc: VscControlParams = field(default_factory=VscControlParams)
    network: NetworkParams = field(default_factory=NetworkParams)


@dataclass(frozen=True)
class PlantState:
    droop: DroopState
    battery: BatteryState
    mppt: MpptState
    vdc: float
    regulator_integ: float
    t: float
    p_gov: float = 0.0
    p_inv: float = 0.0
    p_batt: float = 0.0
    p_pv: float = 0.0
    e_net: float = 0.0
    step_index: int = 0
    limited: bool = False


@dataclass(frozen=True)
class TimeSeriesRecord:
    t: float
    freq: float
    p_load: float
    p_pv: float
    p_batt: float
    p_inv: float
    vdc: float
    soc: float
    limited: bool


@dataclass
class RunResult:
    records: list
    status: str
    reason: str | None = None
    t_fail: float | None = None
    final_state: PlantState | None = None
    metadata: dict = field(default_factory=dict)


def resolve_p_ref(models, scenario):
    """Droop reference in pu; ``None`` means the pre-event converter share."""
    if models.droop.p_ref is not None:
        return models.droop
    p_ref = (scenario.load_initial - models.network.ac_p_sched) / models.droop.s_base
    return replace(models.droop, p_ref=p_ref)


@lru_cache(maxsize=32)
def _fit(params, ideality):
    return fit_single_diode(params, a=ideality)


class _Plant:
    """Pre-computed constants and the flat-state RK4 kernel."""

    def __init__(self, scenario, models):
        self.scenario = scenario
        self.models = models
        self.droop = resolve_p_ref(models, scenario)
        pv = models.pv
        self.derived = _fit(pv.params, pv.ideality)
        self.v_oc = open_circuit_voltage(
            self.derived, pv.params, scenario.irradiance, scenario.temperature
        )
        n_mppt = pv.mppt_period / scenario.dt
        self.mppt_every = int(round(n_mppt))
        if self.mppt_every < 1 or abs(self.mppt_every - n_mppt) > 1e-6:
            raise InvalidParams(
                f"mppt_period ({pv.mppt_period}) must be a whole number of steps of dt ({scenario.dt})"
            )
        self.track = pv.mppt_enabled
        self._pv_cache = {}

    # -- PV ---------------------------------------------------------------
    def pv_point(self, v):
        point = self._pv_cache.get(v)
        if point is None:
            sc = self.scenario
            point = solve_iv(
                self.derived, self.models.pv.params, min(v, self.v_oc),
                sc.irradiance, sc.temperature,
            )
            self._pv_cache[v] = point
        return point

    def initial_mppt(self):
        """Run the tracker (no plant dynamics) until it dithers around the MPP."""
        pv = self.models.pv
        state = MpptState(
            v_ref=0.8 * self.v_oc, v_max=self.v_oc, step=pv.mppt_step, period=pv.mppt_period
        )
        for _ in range(math.ceil(self.v_oc / pv.mppt_step) + 20):
            state = mppt_step(state, self.pv_point(state.v_ref))
        return state

    # -- AC side ------------------------------------------------------------
    def load_pu(self, k):
        sc = self.scenario
        load = sc.load_final if k >= sc.step_index else sc.load_initial
        return load / self.droop.s_base

    # -- kernel -----------------------------------------------------------
    def make_kernel(self):
        d = self.droop
        vsc = self.models.vsc
        net = self.models.network
        bp = self.models.battery
        t_a, k_d, w_ref, p_ref = d.t_a, d.k_d, d.omega_ref, d.p_ref
        two_pi_f = 2.0 * math.pi * d.f_base
        s_base = d.s_base
        m_ac, r_ac, t_g = net.ac_inertia, net.ac_droop_gain, net.ac_gov_time
        p_m0 = net.ac_p_sched / s_base
        m_tot = t_a + m_ac
        p_lim = vsc.i_max * vsc.v_ac_ref
        t_i = vsc.t_i
        c_dc = net.c_dc
        vdc_ref = self.scenario.vdc_ref
        kp, ki, p_rating, t_conv = bp.kp_dc, bp.ki_dc, bp.p_rating, bp.t_conv
        e0, r_int, k_pol, q, a_exp, b_exp = bp.e0, bp.r_internal, bp.k_pol, bp.q_cap, bp.a_exp, bp.b_exp
        t_filter = bp.t_filter
        exp = math.exp
        sqrt = math.sqrt

        def deriv(y, p_load, p_pv):
            omega, _theta, p_m, p_inv, vdc, integ, p_batt, it, i_star, _e = y
            dev = w_ref - omega
            # network demand on the converter that keeps both sources in step
            demand = (m_ac * (p_ref + k_d * dev) - t_a * (p_m - p_load)) / m_tot
            if demand > p_lim:
                demand = p_lim
            elif demand < -p_lim:
                demand = -p_lim
            d_omega = (p_ref - p_inv + k_d * dev) / t_a
            d_pm = (p_m0 + r_ac * dev - p_m) / t_g
            d_pinv = (demand - p_inv) / t_i
            p_net = p_pv + p_batt - p_inv * s_base
            d_vdc = p_net / (c_dc * vdc)
            err = vdc_ref - vdc
            raw = kp * err + ki * integ
            if raw > p_rating:
                cmd = p_rating
                d_integ = err if err < 0 else 0.0
            elif raw < -p_rating:
                cmd = -p_rating
                d_integ = err if err > 0 else 0.0
            else:
                cmd = raw
                d_integ = err
            d_pbatt = (cmd - p_batt) / t_conv
            e_oc = e0 - k_pol * q / (q - it) * i_star + a_exp * exp(-b_exp * it)
            disc = e_oc * e_oc - 4.0 * r_int * p_batt
            if disc < 0.0:
                i = e_oc / (2.0 * r_int)
            else:
                i = 2.0 * p_batt / (e_oc + sqrt(disc))
            d_it = i / 3600.0
            if it <= 0.0 and d_it < 0.0:
                d_it = 0.0
            d_istar = (i - i_star) / t_filter
            return (
                d_omega, two_pi_f * omega, d_pm, d_pinv, d_vdc, d_integ,
                d_pbatt, d_it, d_istar, p_net,
            )

        def rk4(y, p_load, p_pv, h):
            k1 = deriv(y, p_load, p_pv)
            y2 = tuple(a + 0.5 * h * b for a, b in zip(y, k1))
            k2 = deriv(y2, p_load, p_pv)
            y3 = tuple(a + 0.5 * h * b for a, b in zip(y, k2))
            k3 = deriv(y3, p_load, p_pv)
            y4 = tuple(a + h * b for a, b in zip(y, k3))
            k4 = deriv(y4, p_load, p_pv)
            h6 = h / 6.0
            return tuple(
                a + h6 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
                for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)
            )

        def demand_limited(y, p_load):
            omega, _theta, p_m = y[0], y[1], y[2]
            dev = w_ref - omega
            demand = (m_ac * (p_ref + k_d * dev) - t_a * (p_m - p_load)) / m_tot
            return abs(demand) > p_lim

        return deriv, rk4, demand_limited

    # -- state conversion ---------------------------------------------------
    @staticmethod
    def to_vector(s):
        return (
            s.droop.omega, s.droop.theta, s.p_gov, s.p_inv, s.vdc, s.regulator_integ,
            s.p_batt, s.battery.it, s.battery.i_star, s.e_net,
        )

    def from_vector(self, y, k, mppt, p_pv, limited):
        bp = self.models.battery
        omega, theta, p_m, p_inv, vdc, integ, p_batt, it, i_star, e_net = y
        i = bat.current_for_power(bp, it, i_star, p_batt)
        v = bat.open_circuit_term(bp, it, i_star) - bp.r_internal * i
        return PlantState(
            droop=DroopState(omega=omega, theta=theta),
            battery=BatteryState(it=it, i_star=i_star, i=i, v_term=v),
            mppt=mppt,
            vdc=vdc,
            regulator_integ=integ,
            t=k * self.scenario.dt,
            p_gov=p_m,
            p_inv=p_inv,
            p_batt=p_batt,
            p_pv=p_pv,
            e_net=e_net,
            step_index=k,
            limited=limited,
        )


def _check_vector(y, t, bp):
    check_frequency(y[0], t=t)
    if not y[4] > 0.0:
        raise DcLinkCollapse(f"DC-link voltage collapsed to {y[4]:.6g} V", t=t)
    bat._check_capacity(bp, y[7], t=t)
    e = bat.open_circuit_term(bp, y[7], y[8])
    if e * e < 4.0 * bp.r_internal * y[6]:
        raise CapacityExhausted(
            f"pack cannot deliver {y[6]:.6g} W (open-circuit term {e:.6g} V)", t=t
        )


def _equilibrium(plant):
    sc = plant.scenario
    models = plant.models
    d = plant.droop
    net = models.network
    bp = models.battery
    s_base = d.s_base
    mppt = plant.initial_mppt()
    p_pv = plant.pv_point(mppt.v_ref).power
    p_load = sc.load_initial / s_base
    p_m0 = net.ac_p_sched / s_base
    mismatch = d.p_ref + p_m0 - p_load
    stiffness = d.k_d + net.ac_droop_gain
    if mismatch == 0.0:
        omega = d.omega_ref
    elif stiffness > 0:
        omega = d.omega_ref + mismatch / stiffness
    else:
        raise NoEquilibrium(
            "droop reference does not match the pre-event load and nothing damps the mismatch"
        )
    dev = d.omega_ref - omega
    p_m = p_m0 + net.ac_droop_gain * dev
    p_inv = d.p_ref + d.k_d * dev
    if abs(p_inv) > models.vsc.i_max * models.vsc.v_ac_ref:
        raise NoEquilibrium(f"pre-event converter power {p_inv:.4f} pu exceeds its current limit")
    p_batt = p_inv * s_base - p_pv
    if abs(p_batt) > bp.p_rating:
        raise NoEquilibrium(
            f"pre-event battery power {p_batt:.6g} W exceeds the converter rating {bp.p_rating:.6g} W"
        )
    if bp.ki_dc > 0:
        vdc = sc.vdc_ref
        integ = p_batt / bp.ki_dc
    else:
        vdc = sc.vdc_ref - p_batt / bp.kp_dc
        integ = 0.0
    try:
        batt = bat.initial_state(bp, p_batt)
    except RunAborted as exc:
        raise NoEquilibrium(str(exc)) from exc
    if abs(batt.i * batt.v_term - p_batt) > 1e-6 * max(1.0, abs(p_batt)):
        raise NoEquilibrium(
            f"battery cannot deliver {p_batt:.6g} W at state of charge {bp.soc_init}"
        )
    return PlantState(
        droop=DroopState(omega=omega, theta=0.0),
        battery=batt,
        mppt=mppt,
        vdc=vdc,
        regulator_integ=integ,
        t=0.0,
        p_gov=p_m,
        p_inv=p_inv,
        p_batt=p_batt,
        p_pv=p_pv,
        e_net=0.0,
        step_index=0,
        limited=False,
    )


def _vector_scales(plant, y):
    bp = plant.models.battery
    scales = [1.0, None, 1.0, 1.0, plant.scenario.vdc_ref, None, bp.p_rating, bp.q_cap, None, None]
    scales[5] = bp.p_rating / bp.ki_dc if bp.ki_dc > 0 else 1.0
    scales[8] = bp.p_rating / bp.e0
    return scales


def initialize_equilibrium(scenario, models, tol=1e-8):
    """Steady pre-event state, verified by one simulated step.

    Raises
    ------
    NoEquilibrium
        If the load cannot be carried within the converter and battery
        ratings, or the verification step moves a state by ``tol`` or more
        relative to its scale.
    """
    plant = _Plant(scenario, models)
    state = _equilibrium(plant)
    _, rk4, _ = plant.make_kernel()
    y0 = _Plant.to_vector(state)
    y1 = rk4(y0, scenario.load_initial / plant.droop.s_base, state.p_pv, scenario.dt)
    for idx, scale in enumerate(_vector_scales(plant, y0)):
        if scale is None:
            continue
        if abs(y1[idx] - y0[idx]) >= tol * scale:
            raise NoEquilibrium(
                f"state entry {idx} moved by {abs(y1[idx] - y0[idx]):.3g} in one step"
            )
    return state


_STATE_NAMES = (
    "omega", "theta", "p_gov", "p_inv", "vdc", "regulator_integ",
    "p_batt", "it", "i_star", "e_net",
)


def state_derivatives(state, scenario, models):
    """Time derivatives of every continuous state at ``state`` (dict by name)."""
    plant = _Plant(scenario, models)
    deriv, _, _ = plant.make_kernel()
    d = deriv(_Plant.to_vector(state), plant.load_pu(state.step_index), state.p_pv)
    return dict(zip(_STATE_NAMES, d))


def step(state, scenario, models):
    """Advance a plant state by one step of ``scenario.dt``.

    Applies the load in force for this step and, on MPPT update steps, the
    tracker update before integrating. Produces exactly the same numbers as
    :func:`run`.
    """
    plant = _Plant(scenario, models)
    if state.step_index >= scenario.n_steps:
        raise InvalidParams("state is already at the end of the horizon")
    _, rk4, demand_limited = plant.make_kernel()
    return _advance(plant, rk4, demand_limited, state)


def _advance(plant, rk4, demand_limited, state):
    k = state.step_index
    mppt, p_pv = state.mppt, state.p_pv
    if plant.track and k > 0 and k % plant.mppt_every == 0:
        mppt = mppt_step(mppt, plant.pv_point(mppt.v_ref))
        p_pv = plant.pv_point(mppt.v_ref).power
    p_load = plant.load_pu(k)
    y = rk4(_Plant.to_vector(state), p_load, p_pv, plant.scenario.dt)
    t = (k + 1) * plant.scenario.dt
    _check_vector(y, t, plant.models.battery)
    y = y[:1] + (wrap_angle(y[1]),) + y[2:]
    return plant.from_vector(y, k + 1, mppt, p_pv, demand_limited(y, plant.load_pu(k + 1)))


def _record(plant, k, y, p_pv, limited):
    d = plant.droop
    sc = plant.scenario
    p_load = sc.load_final if k >= sc.step_index else sc.load_initial
    return TimeSeriesRecord(
        t=k * sc.dt,
        freq=y[0] * d.f_base,
        p_load=p_load,
        p_pv=p_pv,
        p_batt=y[6],
        p_inv=y[3] * d.s_base,
        vdc=y[4],
        soc=1.0 - y[7] / plant.models.battery.q_cap,
        limited=limited,
    )


def run(scenario, models, settle_band=DEFAULT_SETTLE_BAND, initial_state=None):
    """Simulate from equilibrium through ``t_end``.

    Returns a :class:`RunResult` whose ``status`` is ``settled``,
    ``non-settling`` or ``infeasible`` (``reason`` and ``t_fail`` set).
    """
    from .metrics import settling_time

    plant = _Plant(scenario, models)
    state = initial_state if initial_state is not None else _equilibrium(plant)
    _, rk4, demand_limited = plant.make_kernel()

    dt = scenario.dt
    n = scenario.n_steps
    dec = scenario.record_decimation
    every = plant.mppt_every
    track = plant.track
    bp = models.battery
    pv_point = plant.pv_point
    load_pu = plant.load_pu

    y = _Plant.to_vector(state)
    mppt, p_pv = state.mppt, state.p_pv
    limited = demand_limited(y, load_pu(0))
    records = [_record(plant, 0, y, p_pv, limited)]
    status, reason, t_fail = None, None, None
    k = 0
    try:
        while k < n:
            if track and k > 0 and k % every == 0:
                mppt = mppt_step(mppt, pv_point(mppt.v_ref))
                p_pv = pv_point(mppt.v_ref).power
            y = rk4(y, load_pu(k), p_pv, dt)
            k += 1
            _check_vector(y, k * dt, bp)
            if not -math.pi < y[1] <= math.pi:
                y = y[:1] + (wrap_angle(y[1]),) + y[2:]
            limited = demand_limited(y, load_pu(k))
            if k % dec == 0 or k == n:
                records.append(_record(plant, k, y, p_pv, limited))
    except RunAborted as exc:
        status, reason, t_fail = INFEASIBLE, exc.reason, exc.t
        if records[-1].t < k * dt and math.isfinite(y[0]):
            records.append(_record(plant, k, y, p_pv, limited))

    if status is None:
        settle = settling_time(records, settle_band, scenario.t_step)
        status = SETTLED if settle is not None else NON_SETTLING

    final = plant.from_vector(y, k, mppt, p_pv, limited)
    metadata = {
        "p_ref_pu": plant.droop.p_ref,
        "k_d": models.droop.k_d,
        "irradiance": scenario.irradiance,
        "temperature": scenario.temperature,
        "pv_conditions": "constant",
        "k_d_units": "pu power / pu frequency",
        "islanded": models.network.islanded,
    }
    return RunResult(records, status, reason, t_fail, final, metadata)
