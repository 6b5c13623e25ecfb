"""Classical and climate-modulated logistic growth.

    dx/dt = (A + alpha(T, H, t)) x - B x^2,      K = A / B

Time is measured in days from the start of the study window. Climate
(temperature, humidity) is sampled daily and interpolated linearly between
samples.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from . import kernels

DEFAULT_STEP = 0.01


class IntegrationError(ArithmeticError):
    def __init__(self, message: str, t: float | None = None):
        super().__init__(message)
        self.t = t


@dataclass(frozen=True)
class LogisticParams:
    A: float = 0.372
    B: float = 0.0008
    T_star: float = 21.0
    H_star: float = 84.0
    alpha_min: float = -1.372
    alpha_max: float = 0.628

    def __post_init__(self):
        if not (self.A > 0 and self.B > 0):
            raise ValueError(f"A and B must be positive (A={self.A}, B={self.B})")
        if not self.alpha_min < self.alpha_max:
            raise ValueError("alpha_min must be below alpha_max")
        if not math.isfinite(self.A / self.B):
            raise ValueError("carrying capacity A/B is not finite")

    @property
    def K(self) -> float:
        return self.A / self.B

    def with_growth(self, A: float, B: float) -> "LogisticParams":
        return LogisticParams(A, B, self.T_star, self.H_star, self.alpha_min, self.alpha_max)

    def to_dict(self) -> dict:
        return {"A": self.A, "B": self.B, "T_star": self.T_star, "H_star": self.H_star,
                "alpha_min": self.alpha_min, "alpha_max": self.alpha_max}


def logistic_closed_form(params: LogisticParams, x0: float, t):
    """Exact solution of dx/dt = A x - B x^2 with x(0) = x0."""
    if x0 <= 0:
        raise ValueError("x0 must be positive")
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    K = params.K
    out = K / (1.0 + (K - x0) / x0 * np.exp(-params.A * t))
    return float(out) if out.ndim == 0 else out


# --- climate and alpha --------------------------------------------------------------


class Climate:
    """Daily (T, H) samples with piecewise-linear interpolation in time."""

    def __init__(self, days, temperature, humidity):
        self.days = np.asarray(days, dtype=np.float64)
        self.temperature = np.asarray(temperature, dtype=np.float64)
        self.humidity = np.asarray(humidity, dtype=np.float64)
        if not (self.days.shape == self.temperature.shape == self.humidity.shape):
            raise ValueError("climate columns differ in length")
        if self.days.size == 0:
            raise ValueError("empty climate series")
        if np.any(np.diff(self.days) <= 0):
            raise ValueError("climate days must be strictly increasing")

    @classmethod
    def constant(cls, T: float, H: float, n_days: int = 30) -> "Climate":
        return cls(np.arange(n_days), np.full(n_days, float(T)), np.full(n_days, float(H)))

    @classmethod
    def from_series(cls, series) -> "Climate":
        return cls(series.days, series.temperature, series.humidity)

    @property
    def start(self) -> float:
        return float(self.days[0])

    @property
    def end(self) -> float:
        return float(self.days[-1])

    def covers(self, t0: float, t1: float) -> bool:
        return self.start - 1e-9 <= t0 and t1 <= self.end + 1e-9

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < self.start - 1e-9) or np.any(t > self.end + 1e-9):
            bad = t[(t < self.start - 1e-9) | (t > self.end + 1e-9)].ravel()[0]
            raise ValueError(f"climate not defined at t={bad:g} (covers {self.start:g}..{self.end:g})")
        if self.days.size == 1:
            return np.full_like(t, self.temperature[0]), np.full_like(t, self.humidity[0])
        return np.interp(t, self.days, self.temperature), np.interp(t, self.days, self.humidity)


class AlphaFunction(Protocol):
    lo: float
    hi: float

    def __call__(self, T, H, t) -> np.ndarray: ...


@dataclass(frozen=True)
class ConstantAlpha:
    value: float = 0.0
    lo: float = -1.372
    hi: float = 0.628

    def __call__(self, T, H, t):
        return np.full(np.shape(t), self.value, dtype=np.float64)


@dataclass(frozen=True)
class SinusoidalAlpha:
    """alpha(t) = amplitude * sin(2 pi t / period + phase), independent of climate."""

    amplitude: float = 0.3
    period: float = 30.0
    phase: float = 0.0
    lo: float = -1.372
    hi: float = 0.628

    def __post_init__(self):
        if not (self.lo <= -abs(self.amplitude) and abs(self.amplitude) <= self.hi):
            raise ValueError("sinusoid amplitude leaves the alpha bounds")

    def __call__(self, T, H, t):
        t = np.asarray(t, dtype=np.float64)
        return self.amplitude * np.sin(2.0 * np.pi * t / self.period + self.phase)


@dataclass(frozen=True)
class CallableAlpha:
    """Wrap an arbitrary vectorised ``fn(T, H, t)``; values are checked against the bounds."""

    fn: Callable
    lo: float = -1.372
    hi: float = 0.628

    def __call__(self, T, H, t):
        out = np.asarray(self.fn(T, H, t), dtype=np.float64)
        if np.any(out < self.lo) or np.any(out > self.hi):
            raise ValueError("alpha function left its bounds")
        return out


def rhs(params: LogisticParams, alpha, x, T, H, t):
    """Right-hand side (A + alpha) x - B x^2."""
    a = alpha(T, H, t)
    out = (params.A + a) * x - params.B * np.asarray(x, dtype=np.float64) ** 2
    return float(out) if np.ndim(out) == 0 else out


# --- RK4 ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    n_clipped: int = 0

    def write_csv(self, path) -> None:
        write_trajectory(self.t, self.x, path)


def write_trajectory(t, x, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_day", "population"])
        for ti, xi in zip(t, x):
            w.writerow([repr(float(ti)), repr(float(xi))])


def _substeps(t_grid: np.ndarray, h: float):
    """Per-step sizes and start times; each grid interval gets a whole number of steps."""
    sizes, starts, marks = [], [], [0]
    for a, b in zip(t_grid[:-1], t_grid[1:]):
        n = max(1, int(math.ceil((b - a) / h - 1e-9)))
        step = (b - a) / n
        starts.append(a + step * np.arange(n))
        sizes.append(np.full(n, step))
        marks.append(marks[-1] + n)
    if not sizes:
        return np.zeros(0), np.zeros(0), np.array(marks)
    return np.concatenate(sizes), np.concatenate(starts), np.array(marks)


def tabulate_alpha(alpha, climate: Climate | None, stage_times: np.ndarray) -> np.ndarray:
    shape = stage_times.shape
    flat = stage_times.ravel()
    if climate is None:
        T = np.zeros_like(flat)
        H = np.zeros_like(flat)
    else:
        T, H = climate(flat)
    return np.asarray(alpha(T, H, flat), dtype=np.float64).reshape(shape)


def integrate_rk4(params: LogisticParams, alpha, x0: float, climate: Climate | None, t_grid,
                  h: float = DEFAULT_STEP) -> Trajectory:
    """Fixed-step classical RK4 of the modulated logistic, sampled on ``t_grid``."""
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise ValueError("t_grid must be a nonempty 1-D array")
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    if h <= 0:
        raise ValueError("step must be positive")
    if not math.isfinite(x0):
        raise IntegrationError("non-finite initial state", float(t_grid[0]))
    if climate is not None and not climate.covers(t_grid[0], t_grid[-1]):
        raise ValueError(f"climate covers {climate.start:g}..{climate.end:g}, "
                         f"grid needs {t_grid[0]:g}..{t_grid[-1]:g}")
    hs, starts, marks = _substeps(t_grid, h)
    stage_times = np.stack([starts, starts + 0.5 * hs, starts + hs], axis=1)
    tab = tabulate_alpha(alpha, climate, stage_times) if hs.size else np.zeros((0, 3))
    if not np.all(np.isfinite(tab)):
        raise IntegrationError("non-finite alpha value", float(stage_times[~np.isfinite(tab)][0]))
    xs, clipped, blowup = kernels.rk4_tabulated(float(params.A), float(params.B), float(x0), hs, tab)
    if blowup >= 0:
        raise IntegrationError(f"state became non-finite at t={starts[blowup] + hs[blowup]:g}",
                               float(starts[blowup] + hs[blowup]))
    return Trajectory(t_grid.copy(), np.asarray(xs)[marks], int(clipped))


# --- sign diagnostic ----------------------------------------------------------------


@dataclass(frozen=True)
class SignDiagnostic:
    n: int
    n_match: int
    n_favourable: int
    M1: float
    M2: float

    @property
    def fraction(self) -> float:
        return self.n_match / self.n if self.n else float("nan")

    def report(self) -> str:
        return (f"sign diagnostic (M1={self.M1:g}, M2={self.M2:g})\n"
                f"  days evaluated:            {self.n}\n"
                f"  days inside both optima:   {self.n_favourable}\n"
                f"  sign matches criterion:    {self.n_match} ({self.fraction:.3f})\n")


def sign_diagnostic(alpha_values, temperature, humidity, params: LogisticParams,
                    M1: float, M2: float) -> SignDiagnostic:
    """Count days where sign(alpha) agrees with the optimum-deviation rule.

    Favourable days ((T-T*)^2 <= M1 and (H-H*)^2 <= M2) should have
    alpha >= 0, all others alpha < 0. Reported only; never enforced.
    """
    a = np.asarray(alpha_values, dtype=np.float64)
    dT = (np.asarray(temperature, dtype=np.float64) - params.T_star) ** 2
    dH = (np.asarray(humidity, dtype=np.float64) - params.H_star) ** 2
    favourable = (dT <= M1) & (dH <= M2)
    match = np.where(favourable, a >= 0, a < 0)
    return SignDiagnostic(int(a.size), int(match.sum()), int(favourable.sum()), float(M1), float(M2))
