"""Scalar metrics extracted from a run's time series."""
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from ._validation import check_non_negative, check_positive
from .errors import InsufficientData, InvalidParams

DEFAULT_ROCOF_WINDOW = 0.3  # s
DEFAULT_SETTLE_BAND = 0.02  # Hz
TRAILING_FRACTION = 0.2

_FIELDS = ("t", "freq", "p_load", "p_pv", "p_batt", "p_inv", "vdc", "soc", "limited")


@dataclass(frozen=True)
class MetricsConfig:
    t_event: float
    vdc_ref: float = 1500.0
    f_nominal: float = 60.0
    k_d: float | None = None
    rocof_window: float = DEFAULT_ROCOF_WINDOW
    settle_band: float = DEFAULT_SETTLE_BAND

    def __post_init__(self):
        check_non_negative("t_event", self.t_event)
        check_positive("vdc_ref", self.vdc_ref)
        check_positive("f_nominal", self.f_nominal)
        check_positive("rocof_window", self.rocof_window)
        check_positive("settle_band", self.settle_band)


@dataclass(frozen=True)
class RunMetrics:
    k_d: float | None
    freq_extremum: float
    rocof_max: float
    p_batt_peak: float
    vdc_extremum: float
    settling_time: float | None
    overshoot: float
    status: str
    freq_final: float = float("nan")
    freq_min: float = float("nan")
    energy_wh: float = 0.0
    limited_time: float = 0.0
    reason: str | None = None
    t_fail: float | None = None


def as_arrays(records):
    """Column arrays from a record list (or pass a dict of arrays through)."""
    if isinstance(records, dict):
        return {k: np.asarray(v) for k, v in records.items()}
    if len(records) == 0:
        raise InsufficientData("no records")
    cols = {name: np.fromiter((getattr(r, name) for r in records), float, len(records))
            for name in _FIELDS if name != "limited"}
    cols["limited"] = np.fromiter((bool(r.limited) for r in records), bool, len(records))
    return cols


def _post(cols, t_event):
    t = cols["t"]
    mask = t >= t_event
    if not mask.any():
        raise InsufficientData(f"no samples at or after t_event = {t_event}")
    return mask


def rocof(records, window, t_event=None):
    """Largest windowed rate of change of frequency (Hz/s) after ``t_event``.

    Evaluated at every sample ``t > t_event`` whose look-back point
    ``t - window`` lies inside the record; the look-back frequency is linearly
    interpolated.
    """
    cols = as_arrays(records)
    t, f = cols["t"], cols["freq"]
    check_positive("window", window)
    if t.size < 2:
        raise InsufficientData("need at least two samples")
    dt_min = float(np.min(np.diff(t)))
    if window < 2 * dt_min * (1 - 1e-9):
        raise InvalidParams(f"window {window} s is shorter than two sample intervals")
    if t[-1] - t[0] < window:
        raise InsufficientData(f"trajectory spans {t[-1] - t[0]} s, shorter than the {window} s window")
    start = t[0] if t_event is None else t_event
    sel = (t >= t[0] + window) & (t > start) if t_event is not None else (t >= t[0] + window)
    if not sel.any():
        raise InsufficientData("no post-event sample has a full window behind it")
    te = t[sel]
    f_back = np.interp(te - window, t, f)
    return float(np.max(np.abs(f[sel] - f_back)) / window)


def settling_time(records, band, t_event):
    """Time after ``t_event`` at which frequency last leaves its final band.

    ``None`` when the trajectory is not inside the band over the trailing
    20% of the horizon.
    """
    check_positive("band", band)
    cols = as_arrays(records)
    t, f = cols["t"], cols["freq"]
    mask = _post(cols, t_event)
    tp, fp = t[mask], f[mask]
    f_final = fp[-1]
    outside = np.abs(fp - f_final) > band
    horizon = t[-1] - t[0]
    trailing = tp >= t[-1] - TRAILING_FRACTION * horizon
    if outside[trailing].any():
        return None
    if not outside.any():
        return 0.0
    last = int(np.flatnonzero(outside)[-1])
    return float(tp[last + 1] - t_event)


def overshoot(records, t_event):
    """Excursion beyond the final frequency, in the direction of travel (Hz)."""
    cols = as_arrays(records)
    mask = _post(cols, t_event)
    t, f = cols["t"], cols["freq"]
    pre = f[t <= t_event]
    f_pre = pre[-1] if pre.size else f[0]
    fp = f[mask]
    f_final = fp[-1]
    direction = np.sign(f_final - f_pre)
    if direction == 0:
        return float(np.max(np.abs(fp - f_final)))
    return float(max(0.0, np.max(direction * (fp - f_final))))


def energy_requirement(records, t_event, p_batt_eq=None):
    """Battery energy delivered above its pre-event output after ``t_event`` (Wh)."""
    cols = as_arrays(records)
    t, p = cols["t"], cols["p_batt"]
    if p_batt_eq is None:
        pre = p[t <= t_event]
        p_batt_eq = pre[-1] if pre.size else p[0]
    mask = _post(cols, t_event)
    tp, pp = t[mask], p[mask]
    if tp[0] > t_event and t[0] < t_event:
        tp = np.concatenate(([t_event], tp))
        pp = np.concatenate(([np.interp(t_event, t, p)], pp))
    excess = np.maximum(pp - p_batt_eq, 0.0)
    if tp.size < 2:
        return 0.0
    return float(trapezoid(excess, tp) / 3600.0)


def limited_time(records, t_event):
    """Total post-event time the converter spent current-limited (s)."""
    cols = as_arrays(records)
    mask = _post(cols, t_event)
    t = cols["t"][mask]
    lim = cols["limited"][mask]
    if t.size < 2:
        return 0.0
    return float(np.sum(np.diff(t)[lim[:-1]]))


def summarize(records, config, status=None, reason=None, t_fail=None):
    """Assemble :class:`RunMetrics`.

    ``status`` defaults to ``settled``/``non-settling`` from the settling
    test. Infeasible runs are summarised over the records they produced and
    report no settling time.
    """
    cols = as_arrays(records)
    ev = config.t_event
    mask = _post(cols, ev)
    f = cols["freq"][mask]
    dev = f - config.f_nominal
    freq_ext = float(f[int(np.argmax(np.abs(dev)))])
    vdc = cols["vdc"][mask]
    vdc_ext = float(vdc[int(np.argmax(np.abs(vdc - config.vdc_ref)))])
    p_peak = float(np.max(np.abs(cols["p_batt"][mask])))
    try:
        r = rocof(cols, config.rocof_window, ev)
    except InsufficientData:
        t = cols["t"]
        r = rocof(cols, max(2 * float(np.min(np.diff(t))), (t[-1] - t[0]) / 2), ev) if t.size > 2 else 0.0
    settle = settling_time(cols, config.settle_band, ev)
    if status is None:
        status = "settled" if settle is not None else "non-settling"
    if status != "settled":
        settle = None
    return RunMetrics(
        k_d=config.k_d,
        freq_extremum=freq_ext,
        rocof_max=r,
        p_batt_peak=p_peak,
        vdc_extremum=vdc_ext,
        settling_time=settle,
        overshoot=overshoot(cols, ev),
        status=status,
        freq_final=float(f[-1]),
        freq_min=float(np.min(f)),
        energy_wh=energy_requirement(cols, ev),
        limited_time=limited_time(cols, ev),
        reason=reason,
        t_fail=t_fail,
    )


def summarize_run(result, scenario, models, rocof_window=DEFAULT_ROCOF_WINDOW,
                  settle_band=DEFAULT_SETTLE_BAND):
    """Metrics for an engine :class:`~droopsim.engine.RunResult`."""
    cfg = MetricsConfig(
        t_event=scenario.t_step,
        vdc_ref=scenario.vdc_ref,
        f_nominal=models.droop.f_base * models.droop.omega_ref,
        k_d=models.droop.k_d,
        rocof_window=rocof_window,
        settle_band=settle_band,
    )
    return summarize(result.records, cfg, status=result.status,
                     reason=result.reason, t_fail=result.t_fail)
