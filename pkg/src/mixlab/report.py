"""Experiment reports: checks, fits, tables, CSV and figure output."""

from __future__ import annotations

import csv
import datetime as _dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .config import ExperimentConfig
from .spectral import ScalarField, write_mixf

__all__ = ["Check", "FitReport", "Table", "ExperimentReport", "fit_line", "write_report"]

R2_FLOOR = 0.9


@dataclass(frozen=True)
class Check:
    """One asserted property of an experiment."""

    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class FitReport:
    """Least-squares line ``y = slope x + intercept`` and the constant it supports.

    ``direction`` states the inequality the fitted constant backs.
    """

    name: str
    fitted_constant: float
    slope: float
    intercept: float
    residual: float
    r_squared: float
    n_points: int
    direction: str
    digest: str = ""

    @property
    def flagged(self) -> bool:
        return not (self.r_squared >= R2_FLOOR)

    def as_row(self) -> list[str]:
        vals = [self.fitted_constant, self.slope, self.intercept, self.residual, self.r_squared]
        return [self.name, *(_fmt(v) for v in vals), str(self.n_points), self.direction,
                "flagged" if self.flagged else "ok", self.digest]


FIT_COLUMNS = ["fit", "fitted_constant", "slope", "intercept", "residual", "r_squared", "n_points",
               "direction", "status", "config_digest"]


def fit_line(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float, float]:
    """Return ``(slope, intercept, rms residual, R^2)`` of an ordinary least-squares line."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("a line fit needs at least two points")
    slope, intercept = np.polyfit(x, y, 1)
    res = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(np.sqrt(np.mean(res**2))), r2


@dataclass
class Table:
    """Column-oriented numeric table written as ``<name>.csv``."""

    columns: list[str]
    rows: list[list[Any]] = field(default_factory=list)

    def add(self, *values: Any) -> None:
        if len(values) != len(self.columns):
            raise ValueError("row length does not match the columns")
        self.rows.append(list(values))

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.asarray([r[i] for r in self.rows])


@dataclass
class ExperimentReport:
    """Everything an experiment produces."""

    config: ExperimentConfig
    values: list[tuple[str, Any]] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)
    fits: list[FitReport] = field(default_factory=list)
    tables: dict[str, Table] = field(default_factory=dict)
    fields: dict[str, ScalarField] = field(default_factory=dict)
    figures: list[tuple[str, str, str, list[str], bool]] = field(default_factory=list)

    @property
    def experiment(self) -> str:
        return self.config.experiment

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def value(self, name: str, v: Any) -> None:
        self.values.append((name, v))

    def get(self, name: str) -> Any:
        for k, v in self.values:
            if k == name:
                return v
        raise KeyError(name)

    def check(self, name: str, passed: bool, detail: str = "") -> bool:
        self.checks.append(Check(name, bool(passed), detail))
        return bool(passed)

    def check_named(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def fit(self, name: str, x: Sequence[float], y: Sequence[float], constant: float, direction: str) -> FitReport:
        slope, intercept, resid, r2 = fit_line(x, y)
        rep = FitReport(name, float(constant), slope, intercept, resid, r2, len(x), direction, self.config.digest)
        self.fits.append(rep)
        return rep

    def table(self, name: str, columns: Sequence[str]) -> Table:
        t = Table(list(columns))
        self.tables[name] = t
        return t

    def figure(self, table: str, x: str, ys: Sequence[str], loglog: bool = False, title: str = "") -> None:
        self.figures.append((table, title or table, x, list(ys), loglog))

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]


def _fmt(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def _header(fh, rep: ExperimentReport, timestamp: str) -> None:
    fh.write(f"# generated {timestamp}\n")


def write_report(rep: ExperimentReport, outdir: str | Path, timestamp: str | None = None, figures: bool = True) -> Path:
    """Write ``report.csv``, ``fit.csv``, per-table CSVs, ``fields/*.mixf`` and PNG figures.

    Output is deterministic apart from the first ``# generated`` line of each CSV.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    stamp = timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    cfg = rep.config
    with open(out / "report.csv", "w", newline="") as fh:
        _header(fh, rep, stamp)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["experiment", "parameter", "value"])
        w.writerow([cfg.experiment, "config_digest", cfg.digest])
        w.writerow([cfg.experiment, "seed", cfg.seed])
        for k, v in cfg.params:
            w.writerow([cfg.experiment, f"config.{k}", _fmt(v)])
        for k, v in rep.values:
            w.writerow([cfg.experiment, k, _fmt(v)])
        for c in rep.checks:
            w.writerow([cfg.experiment, f"check.{c.name}", "pass" if c.passed else "fail"])
            if c.detail:
                w.writerow([cfg.experiment, f"check.{c.name}.detail", c.detail])
    with open(out / "fit.csv", "w", newline="") as fh:
        _header(fh, rep, stamp)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIT_COLUMNS)
        for f in rep.fits:
            w.writerow(f.as_row())
    for name, t in rep.tables.items():
        with open(out / f"{name}.csv", "w", newline="") as fh:
            _header(fh, rep, stamp)
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["config_digest", *t.columns])
            for row in t.rows:
                w.writerow([cfg.digest, *(_fmt(v) for v in row)])
    if rep.fields:
        (out / "fields").mkdir(exist_ok=True)
        for name, f in rep.fields.items():
            write_mixf(out / "fields" / f"{name}.mixf", f)
    if figures:
        _write_figures(rep, out)
    return out


def _write_figures(rep: ExperimentReport, out: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    for table, title, x, ys, loglog in rep.figures:
        t = rep.tables[table]
        fig, ax = plt.subplots(figsize=(5.5, 4.0))
        xv = t.column(x).astype(float)
        for y in ys:
            yv = t.column(y).astype(float)
            sel = np.isfinite(yv) & (yv > 0 if loglog else True)
            ax.plot(xv[sel], yv[sel], marker="o", ms=3, label=y)
        if loglog:
            ax.set_xscale("log")
            ax.set_yscale("log")
        ax.set_xlabel(x)
        ax.set_title(title)
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(out / f"{table}.png", dpi=100, metadata={"Software": None})
        plt.close(fig)
