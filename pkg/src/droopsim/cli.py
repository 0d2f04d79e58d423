"""Command-line front end: ``droopsim run | sweep | size``.

Exit codes: 0 success, 1 configuration error, 2 infeasible run,
3 no feasible damping value.
"""
import argparse
import csv
import os
import sys

from .config import load_config
from .engine import INFEASIBLE, run
from .errors import ConfigError, InvalidParams, NoEquilibrium
from .metrics import summarize_run
from .sizing import assess, run_grid

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_NO_FEASIBLE = 3

TIMESERIES_HEADER = ("t", "freq_hz", "p_load_w", "p_pv_w", "p_batt_w", "p_inv_w", "vdc_v", "soc", "limited")

SUMMARY_HEADER = (
    "k_d", "status", "reason", "t_fail_s", "freq_extremum_hz", "freq_final_hz",
    "rocof_max_hz_s", "p_batt_peak_w", "vdc_extremum_v", "settling_time_s",
    "overshoot_hz", "energy_wh", "limited_time_s",
)


def kd_label(k_d):
    """File-name form of a damping value: ``90`` for 90.0, ``12.5`` otherwise."""
    k_d = float(k_d)
    return str(int(k_d)) if k_d.is_integer() else repr(k_d)


def _num(x):
    return "" if x is None else repr(float(x))


def write_timeseries(path, records):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMESERIES_HEADER)
        for r in records:
            w.writerow((repr(r.t), repr(r.freq), repr(r.p_load), repr(r.p_pv), repr(r.p_batt),
                        repr(r.p_inv), repr(r.vdc), repr(r.soc), int(r.limited)))


def read_timeseries(path):
    """Column dict of floats from a time-series CSV (``limited`` as bool)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    cols = {k: [float(r[k]) for r in rows] for k in TIMESERIES_HEADER if k != "limited"}
    cols["limited"] = [r["limited"] == "1" for r in rows]
    return cols


def _metrics_row(m):
    return (
        kd_label(m.k_d), m.status, m.reason or "", _num(m.t_fail), _num(m.freq_extremum),
        _num(m.freq_final), _num(m.rocof_max), _num(m.p_batt_peak), _num(m.vdc_extremum),
        _num(m.settling_time), _num(m.overshoot), _num(m.energy_wh), _num(m.limited_time),
    )


def write_summary_rows(fh, metrics):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for m in metrics:
        w.writerow(_metrics_row(m))


def write_summary(path, metrics):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        write_summary_rows(fh, metrics)


def format_table(metrics):
    """Fixed-width table with the Kd / Freq / RoCoF / Pbattery / Vdc layout."""
    head = f"{'Kd':>8} {'Freq (Hz)':>10} {'RoCoF (Hz/s)':>13} {'Pbattery (kW)':>14} " \
           f"{'Vdc (V)':>9} {'Settling (s)':>13}  Status"
    lines = [head, "-" * len(head)]
    for m in metrics:
        settle = f"{m.settling_time:13.3f}" if m.settling_time is not None else f"{'-':>13}"
        status = m.status if m.reason is None else f"{m.status} ({m.reason})"
        lines.append(
            f"{kd_label(m.k_d):>8} {m.freq_extremum:10.3f} {m.rocof_max:13.3f} "
            f"{m.p_batt_peak / 1e3:14.1f} {m.vdc_extremum:9.1f} {settle}  {status}"
        )
    return "\n".join(lines)


def metrics_line(m):
    settle = "none" if m.settling_time is None else f"{m.settling_time:.3f} s"
    return (
        f"k_d={kd_label(m.k_d)} status={m.status}"
        + (f" reason={m.reason}" if m.reason else "")
        + f" freq_extremum={m.freq_extremum:.4f} Hz rocof_max={m.rocof_max:.4f} Hz/s"
        f" p_batt_peak={m.p_batt_peak / 1e3:.1f} kW vdc_extremum={m.vdc_extremum:.2f} V"
        f" settling_time={settle}"
    )


def _out_dir(config, args):
    out = args.out or config.output.dir
    os.makedirs(out, exist_ok=True)
    return out


def _grid_rows(config, args):
    jobs = args.jobs if args.jobs is not None else config.sweep.jobs
    return run_grid(config.sweep.kd_grid, config.scenario, config.models, jobs,
                    config.metrics.rocof_window, config.metrics.settle_band)


def cmd_run(config, args):
    out = _out_dir(config, args)
    try:
        result = run(config.scenario, config.models, settle_band=config.metrics.settle_band)
    except NoEquilibrium as exc:
        print(f"k_d={kd_label(config.models.droop.k_d)} status=infeasible reason=no_equilibrium: {exc}")
        return EXIT_INFEASIBLE
    m = summarize_run(result, config.scenario, config.models,
                      config.metrics.rocof_window, config.metrics.settle_band)
    write_timeseries(os.path.join(out, f"timeseries_kd{kd_label(m.k_d)}.csv"), result.records)
    print(metrics_line(m))
    return EXIT_INFEASIBLE if result.status == INFEASIBLE else EXIT_OK


def cmd_sweep(config, args):
    out = _out_dir(config, args)
    rows = _grid_rows(config, args)
    if config.output.timeseries:
        for kd, result, _ in rows:
            write_timeseries(os.path.join(out, f"timeseries_kd{kd_label(kd)}.csv"), result.records)
    metrics = [m for _, _, m in rows]
    write_summary(os.path.join(out, "summary.csv"), metrics)
    table = format_table(metrics)
    with open(os.path.join(out, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    print(table)
    return EXIT_OK


SIZING_HEADER = SUMMARY_HEADER + (
    "feasible", "candidate", "recommended", "violations",
    "recommended_kd_low", "recommended_kd_high", "battery_power_rating_w", "battery_energy_rating_wh",
)


def write_sizing_report(path, report):
    lo, hi = report.recommended_kd or (None, None)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SIZING_HEADER)
        for m in report.per_kd:
            inside = lo is not None and lo <= m.k_d <= hi
            w.writerow(_metrics_row(m) + (
                int(m.k_d in report.feasible_kd), int(m.k_d in report.candidates), int(inside),
                ";".join(report.violations[m.k_d]),
                "" if lo is None else kd_label(lo), "" if hi is None else kd_label(hi),
                _num(report.battery_power_rating), _num(report.battery_energy_rating),
            ))


def format_report(report):
    lines = [format_table(report.per_kd), ""]
    for m in report.per_kd:
        broken = report.violations[m.k_d]
        lines.append(f"k_d={kd_label(m.k_d)}: " + ("feasible" if not broken else "violates " + ", ".join(broken)))
    lines.append("")
    if report.recommended_kd is None:
        lines.append("no feasible damping value")
    else:
        lo, hi = report.recommended_kd
        lines.append(f"recommended k_d: [{kd_label(lo)}, {kd_label(hi)}]")
        lines.append(f"battery power rating: {report.battery_power_rating / 1e3:.1f} kW"
                     f" (margin {report.margin:g})")
        lines.append(f"battery energy rating: {report.battery_energy_rating:.1f} Wh")
    return "\n".join(lines)


def cmd_size(config, args):
    out = _out_dir(config, args)
    rows = _grid_rows(config, args)
    m = config.models
    report = assess([r[2] for r in rows], config.constraints,
                    m.droop.f_base * m.droop.omega_ref, config.scenario.vdc_ref)
    write_sizing_report(os.path.join(out, "sizing_report.csv"), report)
    print(format_report(report))
    return EXIT_OK if report.recommended_kd is not None else EXIT_NO_FEASIBLE


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "size": cmd_size}


def build_parser():
    parser = argparse.ArgumentParser(prog="droopsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "simulate one damping value and write its time series"),
        ("sweep", "simulate the configured k_d grid and tabulate the metrics"),
        ("size", "recommend a k_d interval and battery rating"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML config file (defaults built in)")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="SECTION.KEY=VALUE", help="override one config value (repeatable)")
        p.add_argument("--jobs", type=int, help="worker processes for sweeps")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.jobs is not None and args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        config = load_config(args.config, args.overrides)
        return COMMANDS[args.command](config, args)
    except (ConfigError, InvalidParams) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
