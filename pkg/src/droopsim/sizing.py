"""Damping-coefficient sweep and battery sizing under protection constraints.

A k_d value is *feasible* when its run settles, keeps RoCoF under the limit,
stays inside the frequency band and above the UFLS threshold, keeps the DC
link inside its band, and is current-limited for no more than a short
transient. Among feasible values with RoCoF at least ``rocof_safety`` times
below the limit, the one needing the smallest battery is the anchor. The
recommended interval is the contiguous run of such values around the anchor
whose peak battery power stays within ``cost_tolerance`` of the anchor's.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import os

from sklearn.base import BaseEstimator

from ._validation import check_non_negative, check_positive
from .engine import Models, Scenario, run
from .errors import InvalidParams, NoFeasiblePoint
from .metrics import DEFAULT_ROCOF_WINDOW, DEFAULT_SETTLE_BAND, summarize_run


@dataclass(frozen=True)
class SizingConstraints:
    """Protection limits and sizing knobs.

    ``rocof_limit = 0`` is accepted and makes every point infeasible.
    """

    freq_band: float = 0.5
    rocof_limit: float = 1.5
    ufls_threshold: float = 59.5
    vdc_band: float = 75.0
    margin: float = 1.2
    rocof_safety: float = 1.5
    cost_tolerance: float = 1.2
    limit_tolerance: float = 0.05

    def __post_init__(self):
        check_positive("freq_band", self.freq_band)
        check_non_negative("rocof_limit", self.rocof_limit)
        check_positive("ufls_threshold", self.ufls_threshold)
        check_positive("vdc_band", self.vdc_band)
        check_non_negative("limit_tolerance", self.limit_tolerance)
        for name in ("margin", "rocof_safety", "cost_tolerance"):
            value = getattr(self, name)
            check_positive(name, value)
            if value < 1.0:
                raise InvalidParams(f"{name} must be >= 1, got {value}")


@dataclass
class SizingReport:
    per_kd: list
    feasible_kd: list
    violations: dict
    candidates: list = field(default_factory=list)
    recommended_kd: tuple | None = None
    battery_power_rating: float | None = None
    battery_energy_rating: float | None = None
    margin: float = 1.0


def violations(metrics, constraints, f_nominal=60.0, vdc_ref=1500.0):
    """Names of the constraints a run breaks (empty when feasible)."""
    c = constraints
    out = []
    if metrics.status != "settled":
        out.append(metrics.reason or metrics.status)
    if not metrics.rocof_max < c.rocof_limit:
        out.append("rocof")
    if abs(metrics.freq_extremum - f_nominal) > c.freq_band:
        out.append("freq_band")
    if not min(metrics.freq_extremum, metrics.freq_min) > c.ufls_threshold:
        out.append("ufls")
    if abs(metrics.vdc_extremum - vdc_ref) > c.vdc_band:
        out.append("vdc_band")
    if metrics.limited_time > c.limit_tolerance:
        out.append("current_limit")
    return out


def _run_one(args):
    kd, scenario, models, rocof_window, settle_band = args
    models = replace(models, droop=replace(models.droop, k_d=float(kd)))
    result = run(scenario, models, settle_band=settle_band)
    metrics = summarize_run(result, scenario, models, rocof_window, settle_band)
    return float(kd), result, metrics


def _check_grid(kd_grid):
    grid = [float(k) for k in kd_grid]
    if not grid:
        raise InvalidParams("kd_grid is empty")
    for k in grid:
        check_non_negative("k_d", k)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidParams("kd_grid must be strictly increasing")
    return grid


def run_grid(kd_grid, scenario, models, jobs=None,
             rocof_window=DEFAULT_ROCOF_WINDOW, settle_band=DEFAULT_SETTLE_BAND):
    """Run every k_d and return ``(k_d, RunResult, RunMetrics)`` tuples by k_d.

    ``jobs`` caps worker processes (``None`` means all CPUs, ``1`` runs in
    this process). Results do not depend on ``jobs``.
    """
    grid = _check_grid(kd_grid)
    tasks = [(k, scenario, models, rocof_window, settle_band) for k in grid]
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs < 1:
        raise InvalidParams(f"jobs must be >= 1, got {jobs}")
    if jobs == 1 or len(tasks) == 1:
        out = [_run_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            out = list(pool.map(_run_one, tasks))
    return sorted(out, key=lambda row: row[0])


def assess(per_kd, constraints, f_nominal=60.0, vdc_ref=1500.0):
    """Build a :class:`SizingReport` from per-k_d metrics (sorted by k_d)."""
    c = constraints
    broken = {m.k_d: violations(m, c, f_nominal, vdc_ref) for m in per_kd}
    feasible = [m for m in per_kd if not broken[m.k_d]]
    report = SizingReport(
        per_kd=list(per_kd),
        feasible_kd=[m.k_d for m in feasible],
        violations=broken,
        margin=c.margin,
    )
    safe = c.rocof_limit / c.rocof_safety
    ok = [not broken[m.k_d] and m.rocof_max <= safe for m in per_kd]
    report.candidates = [m.k_d for m, good in zip(per_kd, ok) if good]
    if not report.candidates:
        return report
    anchor = min((i for i, good in enumerate(ok) if good),
                 key=lambda i: (per_kd[i].p_batt_peak, per_kd[i].k_d))
    cap = c.cost_tolerance * per_kd[anchor].p_batt_peak
    lo = hi = anchor
    while lo > 0 and ok[lo - 1] and per_kd[lo - 1].p_batt_peak <= cap:
        lo -= 1
    while hi < len(per_kd) - 1 and ok[hi + 1] and per_kd[hi + 1].p_batt_peak <= cap:
        hi += 1
    chosen = per_kd[lo:hi + 1]
    report.recommended_kd = (per_kd[lo].k_d, per_kd[hi].k_d)
    report.battery_power_rating = max(m.p_batt_peak for m in chosen) * c.margin
    report.battery_energy_rating = max(m.energy_wh for m in chosen) * c.margin
    return report


def sweep(kd_grid, scenario=None, models=None, constraints=None, jobs=None,
          rocof_window=DEFAULT_ROCOF_WINDOW, settle_band=DEFAULT_SETTLE_BAND):
    """Run the grid and size the battery.

    Raises
    ------
    NoFeasiblePoint
        When nothing is recommended; the full report is on ``exc.report``.
    """
    scenario = scenario or Scenario()
    models = models or Models()
    constraints = constraints or SizingConstraints()
    rows = run_grid(kd_grid, scenario, models, jobs, rocof_window, settle_band)
    f_nominal = models.droop.f_base * models.droop.omega_ref
    report = assess([m for _, _, m in rows], constraints, f_nominal, scenario.vdc_ref)
    if report.recommended_kd is None:
        raise NoFeasiblePoint("no k_d value satisfies the constraints", report=report)
    return report


class DampingSizer(BaseEstimator):
    """Estimator-style wrapper around :func:`sweep`.

    ``fit(kd_grid)`` runs the grid; the recommendation lands in
    ``recommended_kd_`` and the ratings in ``battery_power_rating_`` and
    ``battery_energy_rating_``. On :class:`NoFeasiblePoint` the report is
    still stored before the exception propagates.
    """

    def __init__(self, scenario=None, models=None, constraints=None, jobs=1,
                 rocof_window=DEFAULT_ROCOF_WINDOW, settle_band=DEFAULT_SETTLE_BAND):
        self.scenario = scenario
        self.models = models
        self.constraints = constraints
        self.jobs = jobs
        self.rocof_window = rocof_window
        self.settle_band = settle_band

    def fit(self, kd_grid, y=None):
        try:
            report = sweep(kd_grid, self.scenario, self.models, self.constraints,
                           self.jobs, self.rocof_window, self.settle_band)
        except NoFeasiblePoint as exc:
            self.report_ = exc.report
            self.recommended_kd_ = None
            raise
        self.report_ = report
        self.recommended_kd_ = report.recommended_kd
        self.battery_power_rating_ = report.battery_power_rating
        self.battery_energy_rating_ = report.battery_energy_rating
        self.feasible_kd_ = report.feasible_kd
        return self
