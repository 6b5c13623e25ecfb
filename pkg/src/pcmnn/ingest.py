"""Daily trap-count CSV loading, windowing, interannual compositing, scaling.

Input CSV (UTF-8, mandatory header)::

    year,month,day,male_count,temp_c,rh_pct
    2021,8,1,7,23.5,80

Composite CSV::

    day_index,date,population,temp_c,rh_pct
    0,07-25,4.5,21.3,83.0

The modelled state is the composited *daily* adult count: trapped males are
doubled (roughly even sex ratio) and averaged per calendar date across years.
It is not a cumulative total.
"""

from __future__ import annotations

import csv
import datetime as dt
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

INPUT_HEADER = ("year", "month", "day", "male_count", "temp_c", "rh_pct")
COMPOSITE_HEADER = ("day_index", "date", "population", "temp_c", "rh_pct")

WINDOW_START = (7, 25)
WINDOW_END = (8, 23)
WINDOW_DAYS = 30

# squared-deviation features are divided by these so they stay order one
TEMP_FEATURE_SCALE = 100.0
HUMIDITY_FEATURE_SCALE = 1000.0


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class DailyRecord:
    year: int
    doy: int
    male_count: int
    temperature: float
    humidity: float

    def __post_init__(self):
        if self.male_count < 0:
            raise DataError(f"negative male_count {self.male_count}")
        if not 0.0 <= self.humidity <= 100.0:
            raise DataError(f"humidity {self.humidity} outside [0, 100]")

    @property
    def date(self) -> dt.date:
        return dt.date(self.year, 1, 1) + dt.timedelta(days=self.doy - 1)

    @property
    def month_day(self) -> tuple[int, int]:
        d = self.date
        return d.month, d.day


def window_dates() -> list[tuple[int, int]]:
    """The 30 (month, day) pairs of the study window, in order."""
    start = dt.date(2001, *WINDOW_START)  # any non-leap year; the window avoids Feb 29
    return [((start + dt.timedelta(days=i)).month, (start + dt.timedelta(days=i)).day)
            for i in range(WINDOW_DAYS)]


def doy_of(year: int, month: int, day: int) -> int:
    return dt.date(year, month, day).timetuple().tm_yday


def load_csv(path) -> list[DailyRecord]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such input file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        return parse_rows(csv.reader(fh), source=str(path))


def parse_rows(rows: Iterable[Sequence[str]], source: str = "<input>") -> list[DailyRecord]:
    it = iter(rows)
    try:
        header = next(it)
    except StopIteration:
        raise DataError(f"{source}: missing header line") from None
    header = tuple(h.strip().lstrip("﻿") for h in header)
    if header != INPUT_HEADER:
        raise DataError(f"{source}: header must be {','.join(INPUT_HEADER)}, got {','.join(header)}")
    out = []
    for lineno, row in enumerate(it, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(INPUT_HEADER):
            raise DataError(f"{source}:{lineno}: expected {len(INPUT_HEADER)} fields, got {len(row)}")
        try:
            year, month, day = int(row[0]), int(row[1]), int(row[2])
            count = int(row[3])
            temp, rh = float(row[4]), float(row[5])
            doy = doy_of(year, month, day)
        except ValueError as exc:
            raise DataError(f"{source}:{lineno}: {exc}") from None
        try:
            out.append(DailyRecord(year, doy, count, temp, rh))
        except DataError as exc:
            raise DataError(f"{source}:{lineno}: {exc}") from None
    return out


def write_records(records: Iterable[DailyRecord], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INPUT_HEADER)
        for r in records:
            m, d = r.month_day
            w.writerow([r.year, m, d, r.male_count, repr(float(r.temperature)), repr(float(r.humidity))])


def in_window(month: int, day: int) -> bool:
    return WINDOW_START <= (month, day) <= WINDOW_END


def window(records: Sequence[DailyRecord]) -> list[DailyRecord]:
    """Keep records dated July 25 through August 23 (inclusive), in input order."""
    if not records:
        raise DataError("no records to window")
    return [r for r in records if in_window(*r.month_day)]


@dataclass(frozen=True)
class CompositeSeries:
    day_index: np.ndarray
    population: np.ndarray
    temperature: np.ndarray
    humidity: np.ndarray
    n_years: int
    dates: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        n = len(self.day_index)
        if not (len(self.population) == len(self.temperature) == len(self.humidity) == n):
            raise DataError("composite columns differ in length")
        if n and np.any(np.diff(self.day_index) != 1):
            raise DataError("day_index must increase by one with no gaps")
        if np.any(np.asarray(self.population) < 0):
            raise DataError("population must be nonnegative")

    def __len__(self) -> int:
        return len(self.day_index)

    @property
    def days(self) -> np.ndarray:
        return np.asarray(self.day_index, dtype=np.float64)

    def slice(self, start: int, stop: int) -> "CompositeSeries":
        """Rows ``start..stop-1`` by position (day_index values are kept)."""
        sl = slice(start, stop)
        return CompositeSeries(self.day_index[sl], self.population[sl], self.temperature[sl],
                               self.humidity[sl], self.n_years, tuple(self.dates[sl]))


def composite(records: Sequence[DailyRecord], years: Iterable[int]) -> CompositeSeries:
    years = sorted(set(int(y) for y in years))
    if not years:
        raise DataError("no years requested")
    cells: dict[tuple[int, tuple[int, int]], DailyRecord] = {}
    for r in records:
        if r.year not in years:
            continue
        key = (r.year, r.month_day)
        if key in cells:
            raise DataError(f"duplicate record for {r.year}-{key[1][0]:02d}-{key[1][1]:02d}")
        cells[key] = r
    dates = window_dates()
    pop, temp, hum = (np.zeros(len(dates)) for _ in range(3))
    for i, md in enumerate(dates):
        rows = []
        for y in years:
            r = cells.get((y, md))
            if r is None:
                raise DataError(f"missing record for {y}-{md[0]:02d}-{md[1]:02d}")
            rows.append(r)
        pop[i] = np.mean([2.0 * r.male_count for r in rows])
        temp[i] = np.mean([r.temperature for r in rows])
        hum[i] = np.mean([r.humidity for r in rows])
    return CompositeSeries(np.arange(len(dates)), pop, temp, hum, len(years), tuple(dates))


def write_composite(series: CompositeSeries, path) -> None:
    dates = series.dates or window_dates()[: len(series)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPOSITE_HEADER)
        for i in range(len(series)):
            m, d = dates[i]
            w.writerow([int(series.day_index[i]), f"{m:02d}-{d:02d}", repr(float(series.population[i])),
                        repr(float(series.temperature[i])), repr(float(series.humidity[i]))])


def load_composite(path, n_years: int = 0) -> CompositeSeries:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such composite file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(h.strip() for h in rows[0]) != COMPOSITE_HEADER:
        raise DataError(f"{path}: header must be {','.join(COMPOSITE_HEADER)}")
    idx, pop, temp, hum, dates = [], [], [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            idx.append(int(row[0]))
            m, d = row[1].split("-")
            dates.append((int(m), int(d)))
            pop.append(float(row[2]))
            temp.append(float(row[3]))
            hum.append(float(row[4]))
        except (ValueError, IndexError) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    return CompositeSeries(np.array(idx), np.array(pop), np.array(temp), np.array(hum), n_years, tuple(dates))


def is_composite_file(path) -> bool:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        first = fh.readline()
    return tuple(h.strip() for h in first.strip().split(",")) == COMPOSITE_HEADER


# --- model-input scaling --------------------------------------------------------------


@dataclass(frozen=True)
class NormalizationSpec:
    """Affine time map plus the optimum references for the deviation features.

    ``t = (day - t_offset) / t_scale``; deviation features are
    ``(T - T_offset)^2 / temp_feature_scale`` and
    ``(H - H_offset)^2 / humidity_feature_scale``.
    """

    t_offset: float = 0.0
    t_scale: float = float(WINDOW_DAYS - 1)
    T_offset: float = 21.0
    H_offset: float = 84.0
    temp_feature_scale: float = TEMP_FEATURE_SCALE
    humidity_feature_scale: float = HUMIDITY_FEATURE_SCALE

    def __post_init__(self):
        for name in ("t_scale", "temp_feature_scale", "humidity_feature_scale"):
            if getattr(self, name) == 0.0 or not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite and nonzero")

    @classmethod
    def for_window(cls, n_days: int = WINDOW_DAYS, T_star: float = 21.0, H_star: float = 84.0):
        if n_days < 2:
            raise DataError("window must span at least two days")
        return cls(0.0, float(n_days - 1), T_star, H_star)

    def time(self, day) -> np.ndarray:
        return (np.asarray(day, dtype=np.float64) - self.t_offset) / self.t_scale

    def day(self, t) -> np.ndarray:
        return np.asarray(t, dtype=np.float64) * self.t_scale + self.t_offset

    def features(self, temperature, humidity, t) -> np.ndarray:
        """Alpha-network inputs, one row per sample: (dT^2, dH^2, t), scaled."""
        T = np.asarray(temperature, dtype=np.float64)
        H = np.asarray(humidity, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        T, H, t = np.broadcast_arrays(T, H, t)
        return np.stack([
            (T - self.T_offset) ** 2 / self.temp_feature_scale,
            (H - self.H_offset) ** 2 / self.humidity_feature_scale,
            t,
        ], axis=-1)

    def to_dict(self) -> dict:
        return {"t_offset": self.t_offset, "t_scale": self.t_scale, "T_offset": self.T_offset,
                "H_offset": self.H_offset, "temp_feature_scale": self.temp_feature_scale,
                "humidity_feature_scale": self.humidity_feature_scale}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationSpec":
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class NormalizedSeries:
    t: np.ndarray
    features: np.ndarray
    population: np.ndarray
    spec: NormalizationSpec

    def days(self) -> np.ndarray:
        return self.spec.day(self.t)


def normalize(series: CompositeSeries, spec: NormalizationSpec) -> NormalizedSeries:
    if len(series) == 0:
        raise DataError("cannot normalize an empty series")
    t = spec.time(series.days)
    return NormalizedSeries(t, spec.features(series.temperature, series.humidity, t),
                            np.asarray(series.population, dtype=np.float64), spec)


def denormalize_days(norm: NormalizedSeries) -> np.ndarray:
    """Inverse time map, rounded back to integer day indices."""
    return np.rint(norm.spec.day(norm.t)).astype(int)
