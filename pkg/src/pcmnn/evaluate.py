"""Fit metrics, ODE back-solve verification, and forecasting."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .dynamics import Climate, LogisticParams, Trajectory, integrate_rk4
from .pinn import NetworkAlpha, TrainState

METRICS_HEADER = ("label", "n", "mse", "mae", "r2")


class DegenerateInputWarning(UserWarning):
    pass


@dataclass(frozen=True)
class MetricsReport:
    mse: float
    mae: float
    r2: float  # nan when y_true is constant
    n: int
    label: str = ""

    @property
    def r2_defined(self) -> bool:
        return not math.isnan(self.r2)

    def csv_row(self) -> list[str]:
        r2 = repr(self.r2) if self.r2_defined else "undefined"
        return [self.label, str(self.n), repr(self.mse), repr(self.mae), r2]


def metrics(y_true, y_pred, label: str = "") -> MetricsReport:
    y = np.asarray(y_true, dtype=np.float64).ravel()
    yh = np.asarray(y_pred, dtype=np.float64).ravel()
    if y.shape != yh.shape:
        raise ValueError(f"length mismatch: {y.size} observed vs {yh.size} predicted")
    if y.size < 2:
        raise ValueError("need at least two samples")
    err = y - yh
    mse = float(np.mean(err * err))
    mae = float(np.mean(np.abs(err)))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(err * err)) / ss_tot if ss_tot > 0 else float("nan")
    return MetricsReport(mse, mae, r2, int(y.size), label)


def write_metrics_csv(reports: Iterable[MetricsReport], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for r in reports:
            w.writerow(r.csv_row())


def metrics_table(reports: Iterable[MetricsReport]) -> str:
    rows = [("label", "n", "MSE", "MAE", "R2")]
    for r in reports:
        rows.append((r.label, str(r.n), f"{r.mse:.6g}", f"{r.mae:.6g}",
                     f"{r.r2:.6f}" if r.r2_defined else "undefined"))
    widths = [max(len(row[i]) for row in rows) for i in range(5)]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in rows]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Backsolve:
    trajectory: Trajectory
    metrics: MetricsReport
    x_nn: np.ndarray

    @property
    def relative_gap(self) -> float:
        """sup |x_backsolve - x_nn| / sup |x_nn| over the daily grid."""
        scale = float(np.max(np.abs(self.x_nn)))
        if scale == 0.0:
            return 0.0 if not np.any(self.trajectory.x) else float("inf")
        return float(np.max(np.abs(self.trajectory.x - self.x_nn))) / scale


def verify_backsolve(state: TrainState, params: LogisticParams, series, climate: Climate | None = None,
                     h: float = 0.01) -> Backsolve:
    """Re-integrate the modulated logistic with alpha-hat from the first observation."""
    climate = climate or Climate.from_series(series)
    days = series.days
    x0 = float(series.population[0])
    if x0 <= 0:
        warnings.warn("first observation is zero: back-solve trajectory is identically zero",
                      DegenerateInputWarning)
    alpha = NetworkAlpha(state.alpha_net, state.norm)
    traj = integrate_rk4(params, alpha, x0, climate, days, h=h)
    rep = metrics(series.population, traj.x, label="backsolve")
    return Backsolve(traj, rep, state.x_at(days))


def forecast(state: TrainState, params: LogisticParams, x0: float, climate_future: Climate,
             horizon_days: int, t_start: float | None = None, h: float = 0.01) -> Trajectory:
    """Integrate forward ``horizon_days`` days from ``x0`` with alpha-hat on the given climate.

    ``t_start`` is the window day of ``x0`` (default: the climate's first day).
    Output is sampled daily; horizon 0 returns the single point ``x0``.
    """
    if not x0 > 0:
        raise ValueError("x0 must be positive")
    if horizon_days < 0:
        raise ValueError("horizon must be nonnegative")
    t0 = climate_future.start if t_start is None else float(t_start)
    grid = t0 + np.arange(horizon_days + 1, dtype=np.float64)
    if not climate_future.covers(grid[0], grid[-1]):
        raise ValueError(f"climate covers days {climate_future.start:g}..{climate_future.end:g}, "
                         f"forecast needs {grid[0]:g}..{grid[-1]:g}")
    gaps = np.diff(climate_future.days)
    inside = (climate_future.days[:-1] < grid[-1]) & (climate_future.days[1:] > grid[0])
    if np.any(gaps[inside] > 1.0 + 1e-9):
        raise ValueError("climate series has a gap inside the forecast horizon")
    if horizon_days == 0:
        return Trajectory(grid, np.array([float(x0)]), 0)
    return integrate_rk4(params, NetworkAlpha(state.alpha_net, state.norm), x0, climate_future, grid, h=h)
