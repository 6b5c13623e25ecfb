"""Synthetic trap data from a known alpha, for scoring recovery.

Scenario files are flat ``key = value`` text with ``#`` comments::

    A = 0.372
    B = 0.0008
    alpha = sine          # sine | constant
    alpha_amplitude = 0.3
    climate = constant    # constant | sine | file
    x0 = 2
    noise_sd = 2
    seed = 42

Observations are ``max(0, x_true + N(0, noise_sd^2))``. With
``quantize = true`` (the default) they are further rounded to whole trapped
males, i.e. to even populations, so that the generated data can be written
in the integer-count input schema and reloaded without loss.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dynamics import Climate, ConstantAlpha, LogisticParams, SinusoidalAlpha, integrate_rk4
from .ingest import (WINDOW_DAYS, CompositeSeries, DailyRecord, doy_of, load_composite, window_dates)

GROUND_TRUTH_HEADER = ("day_index", "date", "x_true", "alpha_true", "temp_c", "rh_pct")


@dataclass(frozen=True)
class Scenario:
    params: LogisticParams = field(default_factory=LogisticParams)
    alpha_true: object = field(default_factory=SinusoidalAlpha)
    climate: Climate = field(default_factory=lambda: Climate.constant(21.0, 84.0, WINDOW_DAYS))
    x0: float = 2.0
    noise_sd: float = 2.0
    seed: int = 42
    quantize: bool = True
    year: int = 2021
    step: float = 0.01

    def __post_init__(self):
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if not self.x0 > 0:
            raise ValueError("x0 must be positive")
        p = self.params
        if self.alpha_true.lo < p.alpha_min or self.alpha_true.hi > p.alpha_max:
            raise ValueError("alpha_true bounds exceed the parameter bounds")
        probe = self.alpha_true(*self.climate(self.climate.days), self.climate.days)
        if np.any(probe < p.alpha_min) or np.any(probe > p.alpha_max):
            raise ValueError("alpha_true leaves [alpha_min, alpha_max] on the window")


def benchmark_scenario(**overrides) -> Scenario:
    """Default growth parameters (A = 0.372, B = 0.0008), alpha = 0.3 sin(2 pi t / 30), climate at the optima."""
    return replace(Scenario(), **overrides)


@dataclass(frozen=True)
class GroundTruth:
    day_index: np.ndarray
    x_true: np.ndarray
    alpha_true: np.ndarray
    temperature: np.ndarray
    humidity: np.ndarray

    def write_csv(self, path) -> None:
        dates = window_dates()
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(GROUND_TRUTH_HEADER)
            for i in range(len(self.day_index)):
                m, d = dates[i] if i < len(dates) else (0, 0)
                w.writerow([int(self.day_index[i]), f"{m:02d}-{d:02d}", repr(float(self.x_true[i])),
                            repr(float(self.alpha_true[i])), repr(float(self.temperature[i])),
                            repr(float(self.humidity[i]))])

    @classmethod
    def read_csv(cls, path) -> "GroundTruth":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if tuple(rows[0]) != GROUND_TRUTH_HEADER:
            raise ValueError(f"{path}: not a ground-truth file")
        cols = list(zip(*rows[1:]))
        return cls(np.array(cols[0], dtype=int), np.array(cols[2], dtype=float), np.array(cols[3], dtype=float),
                   np.array(cols[4], dtype=float), np.array(cols[5], dtype=float))


@dataclass(frozen=True)
class Generated:
    series: CompositeSeries
    truth: GroundTruth
    records: tuple[DailyRecord, ...]


def generate(scenario: Scenario) -> Generated:
    clim = scenario.climate
    days = clim.days
    traj = integrate_rk4(scenario.params, scenario.alpha_true, scenario.x0, clim, days, h=scenario.step)
    rng = np.random.default_rng(scenario.seed)
    noise = rng.normal(0.0, scenario.noise_sd, size=days.size) if scenario.noise_sd > 0 else np.zeros(days.size)
    obs = np.maximum(0.0, traj.x + noise)
    counts = None
    if scenario.quantize:
        counts = np.rint(obs / 2.0).astype(int)
        obs = 2.0 * counts
    alpha = np.asarray(scenario.alpha_true(clim.temperature, clim.humidity, days), dtype=np.float64)
    dates = window_dates()[: days.size]
    series = CompositeSeries(np.arange(days.size), obs, clim.temperature.copy(), clim.humidity.copy(), 1,
                             tuple(dates))
    records = ()
    if counts is not None:
        records = tuple(
            DailyRecord(scenario.year, doy_of(scenario.year, m, d), int(c), float(T), float(H))
            for (m, d), c, T, H in zip(dates, counts, clim.temperature, clim.humidity)
        )
    truth = GroundTruth(np.arange(days.size), traj.x, alpha, clim.temperature.copy(), clim.humidity.copy())
    return Generated(series, truth, records)


# --- scenario files -----------------------------------------------------------------

SCENARIO_KEYS = {
    "A", "B", "T_star", "H_star", "alpha_min", "alpha_max",
    "alpha", "alpha_amplitude", "alpha_period", "alpha_phase", "alpha_value",
    "climate", "climate_T", "climate_H", "climate_T_amplitude", "climate_H_amplitude",
    "climate_period", "climate_file",
    "x0", "noise_sd", "seed", "quantize", "year", "step", "n_days",
}


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        if not k:
            raise ValueError(f"{source}:{lineno}: empty key")
        out[k] = v
    return out


def _bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def scenario_from_dict(kv: dict[str, str], base_dir: Path | None = None) -> Scenario:
    unknown = set(kv) - SCENARIO_KEYS
    if unknown:
        raise ValueError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
    f = lambda k, d: float(kv.get(k, d))  # noqa: E731
    params = LogisticParams(f("A", 0.372), f("B", 0.0008), f("T_star", 21.0), f("H_star", 84.0),
                            f("alpha_min", -1.372), f("alpha_max", 0.628))
    lo, hi = params.alpha_min, params.alpha_max
    kind = kv.get("alpha", "sine")
    if kind == "sine":
        alpha = SinusoidalAlpha(f("alpha_amplitude", 0.3), f("alpha_period", 30.0), f("alpha_phase", 0.0), lo, hi)
    elif kind in ("constant", "zero"):
        alpha = ConstantAlpha(f("alpha_value", 0.0) if kind == "constant" else 0.0, lo, hi)
    else:
        raise ValueError(f"unknown alpha kind {kind!r}")
    n_days = int(kv.get("n_days", WINDOW_DAYS))
    ckind = kv.get("climate", "constant")
    T0, H0 = f("climate_T", params.T_star), f("climate_H", params.H_star)
    if ckind == "constant":
        climate = Climate.constant(T0, H0, n_days)
    elif ckind == "sine":
        d = np.arange(n_days, dtype=np.float64)
        w = 2.0 * np.pi * d / f("climate_period", 30.0)
        climate = Climate(d, T0 + f("climate_T_amplitude", 2.0) * np.sin(w),
                          np.clip(H0 + f("climate_H_amplitude", 5.0) * np.cos(w), 0.0, 100.0))
    elif ckind == "file":
        path = Path(kv["climate_file"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        comp = load_composite(path)
        climate = Climate.from_series(comp)
    else:
        raise ValueError(f"unknown climate kind {ckind!r}")
    return Scenario(params, alpha, climate, f("x0", 2.0), f("noise_sd", 2.0), int(kv.get("seed", 42)),
                    _bool(kv.get("quantize", "true")), int(kv.get("year", 2021)), f("step", 0.01))


def load_scenario(path) -> Scenario:
    path = Path(path)
    return scenario_from_dict(parse_kv(path.read_text(encoding="utf-8"), str(path)), path.parent)


BENCHMARK_SCENARIO_TEXT = """\
# canonical recovery benchmark
A = 0.372
B = 0.0008
T_star = 21
H_star = 84
alpha_min = -1.372
alpha_max = 0.628
alpha = sine
alpha_amplitude = 0.3
alpha_period = 30
climate = constant
climate_T = 21
climate_H = 84
x0 = 2
noise_sd = 2
seed = 42
quantize = true
year = 2021
"""


# --- recovery scoring ---------------------------------------------------------------


@dataclass(frozen=True)
class RecoveryReport:
    alpha_rmse: float
    fit: object  # MetricsReport of x_nn vs x_true
    forecast: object  # MetricsReport of the RK4 re-integration vs x_true

    def as_kv(self) -> str:
        return (f"alpha_rmse = {self.alpha_rmse!r}\n"
                f"fit_r2 = {self.fit.r2!r}\n"
                f"fit_mse = {self.fit.mse!r}\n"
                f"forecast_r2 = {self.forecast.r2!r}\n"
                f"forecast_mse = {self.forecast.mse!r}\n")


def alpha_rmse(alpha_hat, alpha_true) -> float:
    a = np.asarray(alpha_hat, dtype=np.float64)
    b = np.asarray(alpha_true, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"grid mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def score_recovery(state, truth: GroundTruth, x0: float | None = None) -> RecoveryReport:
    """Score a trained state against the scenario's ground truth on the daily grid.

    The forecast re-integrates the ODE with alpha-hat from ``x0`` (default:
    the true initial population) and compares with ``x_true``.
    """
    from .evaluate import metrics
    from .pinn import NetworkAlpha, extract_alpha

    days = truth.day_index.astype(np.float64)
    clim = Climate(days, truth.temperature, truth.humidity)
    if not state.climate.covers(days[0], days[-1]):
        raise ValueError(f"ground-truth grid {days[0]:g}..{days[-1]:g} outside the trained window "
                         f"{state.climate.start:g}..{state.climate.end:g}")
    a_hat = extract_alpha(state, clim, days).alpha
    fit = metrics(truth.x_true, state.x_at(days), label="fit")
    x_start = float(truth.x_true[0] if x0 is None else x0)
    traj = integrate_rk4(state.params, NetworkAlpha(state.alpha_net, state.norm), x_start, clim, days)
    fc = metrics(truth.x_true, traj.x, label="forecast")
    return RecoveryReport(alpha_rmse(a_hat, truth.alpha_true), fit, fc)
