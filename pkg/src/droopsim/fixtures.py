"""Golden regression fixtures.

Layout, one directory per fixture under the fixture root::

    fixtures/<name>/config.yaml     pinned configuration
    fixtures/<name>/summary.csv     expected sweep summary
    fixtures/<name>/tolerance.yaml  per-column {rel, abs}; "default" applies otherwise

Fixtures change only through ``python -m droopsim.fixtures regenerate``.
``verify`` re-runs each pinned sweep and compares it column by column.
"""
import argparse
import csv
from dataclasses import dataclass, field
import io
import math
import os
from pathlib import Path
import sys

import yaml

from .cli import SUMMARY_HEADER, write_summary_rows
from .config import load_config
from .sizing import run_grid

DEFAULT_TOLERANCE = {"rel": 1e-7, "abs": 1e-9}
_TEXT_COLUMNS = ("k_d", "status", "reason")


def default_fixture_dir():
    env = os.environ.get("DROOPSIM_FIXTURES")
    if env:
        return Path(env)
    return Path(__file__).resolve().parents[2] / "fixtures"


@dataclass
class GoldenFixture:
    name: str
    config_text: str
    expected: list
    tolerance: dict

    @classmethod
    def load(cls, path):
        path = Path(path)
        config_text = (path / "config.yaml").read_text(encoding="utf-8")
        with open(path / "summary.csv", newline="", encoding="utf-8") as fh:
            expected = list(csv.DictReader(fh))
        tol_path = path / "tolerance.yaml"
        tolerance = {"default": dict(DEFAULT_TOLERANCE)}
        if tol_path.exists():
            tolerance.update(yaml.safe_load(tol_path.read_text(encoding="utf-8")) or {})
        return cls(path.name, config_text, expected, tolerance)

    def tol(self, column):
        t = dict(self.tolerance["default"])
        t.update(self.tolerance.get(column, {}))
        return t["rel"], t["abs"]


@dataclass
class FixtureResult:
    name: str
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.failures


@dataclass
class FixtureReport:
    results: list

    @property
    def passed(self):
        return bool(self.results) and all(r.passed for r in self.results)

    def __str__(self):
        lines = []
        for r in self.results:
            lines.append(f"{'PASS' if r.passed else 'FAIL'} {r.name}")
            lines.extend(f"    {f}" for f in r.failures)
        return "\n".join(lines)


def compute_summary(config_text, jobs=1):
    """Summary rows (as CSV text) for a pinned configuration."""
    config = load_config(text=config_text)
    rows = run_grid(config.sweep.kd_grid, config.scenario, config.models, jobs,
                    config.metrics.rocof_window, config.metrics.settle_band)
    buf = io.StringIO()
    write_summary_rows(buf, [m for _, _, m in rows])
    return buf.getvalue()


def compare(fixture, actual_rows):
    """Column-wise differences as human-readable strings."""
    failures = []
    if len(actual_rows) != len(fixture.expected):
        failures.append(f"row count: expected {len(fixture.expected)}, got {len(actual_rows)}")
        return failures
    for i, (exp, act) in enumerate(zip(fixture.expected, actual_rows)):
        for col in SUMMARY_HEADER:
            e, a = exp.get(col, ""), act.get(col, "")
            if col in _TEXT_COLUMNS or e == "" or a == "":
                if e != a:
                    failures.append(f"row {i} column {col}: expected {e!r}, got {a!r}")
                continue
            ev, av = float(e), float(a)
            rel, abs_ = fixture.tol(col)
            if not math.isclose(av, ev, rel_tol=rel, abs_tol=abs_):
                failures.append(
                    f"row {i} column {col}: expected {ev!r}, got {av!r} (delta {av - ev:.3g})"
                )
    return failures


def verify_fixtures(fixture_dir=None, names=None, jobs=1):
    """Re-run every fixture (or the named ones) and compare."""
    root = Path(fixture_dir) if fixture_dir is not None else default_fixture_dir()
    present = sorted(p.name for p in root.iterdir() if p.is_dir()) if root.is_dir() else []
    wanted = list(names) if names is not None else present
    if not wanted:
        return FixtureReport([FixtureResult("<none>", [f"missing fixture: no fixtures in {root}"])])
    results = []
    for name in wanted:
        path = root / name
        if not (path / "config.yaml").is_file() or not (path / "summary.csv").is_file():
            results.append(FixtureResult(name, [f"missing fixture: {name}"]))
            continue
        fixture = GoldenFixture.load(path)
        actual = list(csv.DictReader(io.StringIO(compute_summary(fixture.config_text, jobs))))
        results.append(FixtureResult(name, compare(fixture, actual)))
    return FixtureReport(results)


def regenerate_fixture(name, fixture_dir=None, config_text=None, jobs=1):
    """Write (or rewrite) ``<name>/summary.csv`` from its pinned config."""
    root = Path(fixture_dir) if fixture_dir is not None else default_fixture_dir()
    path = root / name
    path.mkdir(parents=True, exist_ok=True)
    if config_text is not None:
        (path / "config.yaml").write_text(config_text, encoding="utf-8")
    config_text = (path / "config.yaml").read_text(encoding="utf-8")
    (path / "summary.csv").write_text(compute_summary(config_text, jobs), encoding="utf-8")
    tol = path / "tolerance.yaml"
    if not tol.exists():
        tol.write_text(yaml.safe_dump({"default": dict(DEFAULT_TOLERANCE)}), encoding="utf-8")
    return path


def main(argv=None):
    parser = argparse.ArgumentParser(prog="python -m droopsim.fixtures")
    parser.add_argument("action", choices=("verify", "regenerate"))
    parser.add_argument("names", nargs="*")
    parser.add_argument("--dir", help="fixture root (default: repository fixtures/)")
    args = parser.parse_args(argv)
    if args.action == "verify":
        report = verify_fixtures(args.dir, args.names or None)
        print(report)
        return 0 if report.passed else 1
    root = Path(args.dir) if args.dir else default_fixture_dir()
    names = args.names or sorted(p.name for p in root.iterdir() if p.is_dir())
    for name in names:
        print(f"regenerated {regenerate_fixture(name, root)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
