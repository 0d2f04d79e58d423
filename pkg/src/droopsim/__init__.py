"""Droop-damping transient simulator for an islanded PV + battery microgrid."""
from .battery import BatteryParams, BatteryState, terminal_voltage
from .droop import DroopParams, DroopState, VscControlParams
from .engine import (
    Models,
    NetworkParams,
    PlantState,
    PvPlant,
    RunResult,
    Scenario,
    TimeSeriesRecord,
    initialize_equilibrium,
    run,
    step,
)
from .metrics import RunMetrics, summarize, summarize_run
from .pv import KC200GT, PvArrayParams, SingleDiodeArray, fit_single_diode, solve_iv
from .sizing import DampingSizer, SizingConstraints, SizingReport, sweep

__version__ = "0.1.0"

__all__ = [
    "BatteryParams", "BatteryState", "DampingSizer", "DroopParams", "DroopState",
    "KC200GT", "Models", "NetworkParams", "PlantState", "PvArrayParams", "PvPlant",
    "RunMetrics", "RunResult", "Scenario", "SingleDiodeArray", "SizingConstraints",
    "SizingReport", "TimeSeriesRecord", "VscControlParams", "fit_single_diode",
    "initialize_equilibrium", "run", "solve_iv", "step", "summarize", "summarize_run",
    "sweep", "terminal_voltage",
]
