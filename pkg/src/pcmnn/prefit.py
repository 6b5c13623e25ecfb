"""Nonlinear least-squares estimate of A, B (and x0) on the early window.

Fits the closed-form logistic ``x(t) = K / (1 + (K - x0)/x0 * exp(-A t))``,
``K = A/B``, by Levenberg-Marquardt with an analytic Jacobian and
Marquardt (diagonal) damping, restarted from a small grid of initial guesses.
Time is counted in days from the first day of the fit range.
"""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import LogisticParams, logistic_closed_form
from .ingest import CompositeSeries

MIN_POINTS = 4
COND_LIMIT = 1e10


class IllConditionedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PrefitResult:
    A_hat: float
    B_hat: float
    x0_hat: float
    sse: float
    iterations: int
    converged: bool
    condition: float = float("nan")
    day_range: tuple[int, int] = (0, 21)
    start_sse: tuple[float, ...] = field(default=(), repr=False)
    message: str = ""

    @property
    def K_hat(self) -> float:
        return self.A_hat / self.B_hat

    @property
    def ill_conditioned(self) -> bool:
        return not self.condition < COND_LIMIT

    def as_kv(self) -> str:
        lines = [
            f"A = {self.A_hat!r}",
            f"B = {self.B_hat!r}",
            f"K = {self.K_hat!r}",
            f"x0 = {self.x0_hat!r}",
            f"sse = {self.sse!r}",
            f"iterations = {self.iterations}",
            f"converged = {str(self.converged).lower()}",
            f"condition = {self.condition!r}",
            f"day_start = {self.day_range[0]}",
            f"day_end = {self.day_range[1]}",
        ]
        return "\n".join(lines) + "\n"

    CSV_HEADER = ("A", "B", "K", "x0", "sse", "iterations", "converged", "day_start", "day_end")

    def csv_row(self) -> list[str]:
        return [repr(self.A_hat), repr(self.B_hat), repr(self.K_hat), repr(self.x0_hat), repr(self.sse),
                str(self.iterations), str(self.converged).lower(), str(self.day_range[0]), str(self.day_range[1])]


def logistic_jacobian(A: float, B: float, x0: float, t: np.ndarray) -> np.ndarray:
    """d x(t) / d(A, B, x0) for the closed-form logistic; shape ``(len(t), 3)``."""
    K = A / B
    E = np.exp(-A * t)
    D = x0 + (K - x0) * E
    D2 = D * D
    dK = x0 * x0 * (1.0 - E) / D2
    dA_fixedK = K * x0 * (K - x0) * t * E / D2
    dx0 = K * K * E / D2
    return np.stack([dA_fixedK + dK / B, -dK * A / (B * B), dx0], axis=1)


def _model(theta, t):
    A, B, x0 = theta
    return logistic_closed_form(LogisticParams(A, B), x0, t)


def _valid(theta) -> bool:
    return all(math.isfinite(v) and v > 0 for v in theta)


def levenberg_marquardt(t, y, theta0, fix_x0: bool = False, lam0: float = 1e-3,
                        max_iter: int = 500, rtol: float = 1e-10):
    """Minimise sum (y - x(t; A, B, x0))^2 from ``theta0``.

    Returns ``(theta, sse, iterations, converged)``.
    """
    theta = np.array(theta0, dtype=np.float64)
    if not _valid(theta):
        return theta, math.inf, 0, False
    free = [0, 1] if fix_x0 else [0, 1, 2]
    r = y - _model(theta, t)
    sse = float(r @ r)
    lam = lam0
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        J = logistic_jacobian(*theta, t)[:, free]
        JtJ = J.T @ J
        g = J.T @ r
        improved = False
        while lam < 1e16:
            M = JtJ + lam * np.diag(np.maximum(np.diag(JtJ), 1e-300))
            try:
                step = np.linalg.solve(M, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = theta.copy()
            cand[free] += step
            if _valid(cand):
                r_new = y - _model(cand, t)
                sse_new = float(r_new @ r_new)
                if math.isfinite(sse_new) and sse_new <= sse:
                    rel = (sse - sse_new) / max(sse, 1e-300)
                    theta, r, sse = cand, r_new, sse_new
                    lam = max(lam / 10.0, 1e-12)
                    improved = True
                    if rel < rtol:
                        converged = True
                    break
            lam *= 10.0
        if not improved:
            # no downhill step at any damping: a (local) minimum
            converged = True
        if converged:
            break
    return theta, sse, it, converged


def _condition(theta, t, fix_x0: bool) -> float:
    free = [0, 1] if fix_x0 else [0, 1, 2]
    J = logistic_jacobian(*theta, t)[:, free]
    # column-scaled so the number reflects identifiability, not units
    norms = np.linalg.norm(J, axis=0)
    if np.any(norms == 0):
        return math.inf
    s = np.linalg.svd(J / norms, compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else math.inf


def start_grid(y: np.ndarray, fix_x0: bool = False, seed: int | None = None) -> list[tuple[float, float, float]]:
    """A in {0.1, 0.3, 0.5}, K in {0.5, 1, 2} x max(y), x0 = first observation.

    With ``seed`` the grid order is shuffled and each start jittered by up
    to 10%.
    """
    ymax = float(np.max(y)) if np.max(y) > 0 else 1.0
    x0 = float(y[0]) if y[0] > 0 else max(ymax * 1e-3, 1e-6)
    starts = []
    for A, kf in itertools.product((0.1, 0.3, 0.5), (0.5, 1.0, 2.0)):
        K = kf * ymax
        starts.append((A, A / K, x0))
    if seed is not None:
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(starts))
        jitter = rng.uniform(0.9, 1.1, size=(len(starts), 3))
        if fix_x0:
            jitter[:, 2] = 1.0
        starts = [tuple(np.array(starts[i]) * jitter[j]) for j, i in enumerate(order)]
    return starts


def fit_arrays(t, y, fix_x0: bool = False, seed: int | None = None, starts=None,
               day_range: tuple[int, int] = (0, 0)) -> PrefitResult:
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if t.size < MIN_POINTS:
        raise ValueError(f"need at least {MIN_POINTS} points, got {t.size}")
    starts = starts if starts is not None else start_grid(y, fix_x0, seed)
    best = None
    start_sse = []
    total_iter = 0
    for s in starts:
        s = np.array(s, dtype=np.float64)
        if fix_x0:
            s[2] = float(y[0])
        r0 = y - _model(s, t) if _valid(s) else np.full_like(y, np.inf)
        start_sse.append(float(r0 @ r0))
        theta, sse, it, conv = levenberg_marquardt(t, y, s, fix_x0)
        total_iter += it
        if math.isfinite(sse) and (best is None or sse < best[1]):
            best = (theta, sse, it, conv)
    if best is None:
        return PrefitResult(math.nan, math.nan, math.nan, math.inf, total_iter, False,
                            day_range=day_range, start_sse=tuple(start_sse),
                            message="every start diverged")
    theta, sse, it, conv = best
    cond = _condition(theta, t, fix_x0)
    res = PrefitResult(float(theta[0]), float(theta[1]), float(theta[2]), sse, it, conv, cond, day_range,
                       tuple(start_sse))
    if res.ill_conditioned:
        warnings.warn(f"near-singular Jacobian at the fit (condition {cond:.3g}); "
                      "A and B are not separately identifiable from this data", IllConditionedWarning)
    return res


def fit_logistic(series: CompositeSeries, day_range: tuple[int, int] = (0, 21), fix_x0: bool = False,
                 seed: int | None = None) -> PrefitResult:
    """Fit on composite days ``day_range[0]..day_range[1]`` inclusive (day_index values)."""
    start, end = day_range
    days = np.asarray(series.day_index)
    mask = (days >= start) & (days <= end)
    if start < days.min() or end > days.max() or start > end:
        raise ValueError(f"day range {start}..{end} outside the series ({days.min()}..{days.max()})")
    t = days[mask].astype(np.float64) - start
    y = np.asarray(series.population, dtype=np.float64)[mask]
    return fit_arrays(t, y, fix_x0, seed, day_range=(int(start), int(end)))


def write_fit_curve(result: PrefitResult, series: CompositeSeries, path) -> None:
    """``t_day,x_obs,x_fit`` over the whole series (the curve extends past the fit range)."""
    days = series.days
    x_fit = logistic_closed_form(LogisticParams(result.A_hat, result.B_hat), result.x0_hat,
                                 np.maximum(days - result.day_range[0], 0.0))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_day", "x_obs", "x_fit"])
        for d, xo, xf in zip(days, series.population, x_fit):
            w.writerow([repr(float(d)), repr(float(xo)), repr(float(xf))])


def write_result_csv(result: PrefitResult, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PrefitResult.CSV_HEADER)
        w.writerow(result.csv_row())
