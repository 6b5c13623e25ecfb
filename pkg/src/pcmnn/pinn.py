"""PCM-NN trainer: joint fit of a state network and a bounded alpha network.

The state network maps normalised time to the population, ``x_nn(t)``. The
alpha network maps ``((T-T*)^2, (H-H*)^2, t)`` (scaled, see
:class:`~pcmnn.ingest.NormalizationSpec`) to a value squashed into
``[alpha_min, alpha_max]``. Training minimises

    lambda_data * mean_i (x_nn(t_i) - x_obs(t_i))^2
  + lambda_ode  * mean_j (dx_nn/dday(t_j) - [(A + alpha_nn) x_nn - B x_nn^2](t_j))^2

with the collocation times ``t_j`` drawn uniformly over the window. The
time derivative comes from forward-mode propagation through the state
network, in normalised time, divided by the window span so the residual is
per day.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .autodiff import AdamState, MlpNetwork, NonFiniteGradient, OutputMap, Tape, adam_step, apply
from .autodiff.network import init_network, network_from_dict, network_to_dict
from .dynamics import Climate, LogisticParams
from .ingest import CompositeSeries, NormalizationSpec

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "pcmnn-train"
CHECKPOINT_VERSION = 1


class TrainingError(FloatingPointError):
    pass


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TrainConfig:
    n_data: int = 0  # 0 = every observation
    n_colloc: int = 100
    lambda_data: float = 1.0
    lambda_ode: float = 1.0
    iterations: int = 10_000
    seed: int = 42
    colloc_resample: bool = True
    learning_rate: float = 1e-3
    lr_decay: float = 0.1  # final lr = learning_rate * lr_decay (exponential schedule)
    state_hidden: tuple[int, ...] = (32, 32, 32, 32, 32)
    alpha_hidden: tuple[int, ...] = (64, 64, 64)

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        if self.lambda_data < 0 or self.lambda_ode < 0 or (self.lambda_data == 0 and self.lambda_ode == 0):
            raise ValueError("loss weights must be nonnegative and not both zero")
        if self.n_colloc < 1:
            raise ValueError("n_colloc must be at least 1")
        if self.n_data < 0:
            raise ValueError("n_data must be nonnegative")
        if self.learning_rate <= 0 or not 0 < self.lr_decay <= 1:
            raise ValueError("learning_rate must be positive and lr_decay in (0, 1]")
        object.__setattr__(self, "state_hidden", tuple(int(n) for n in self.state_hidden))
        object.__setattr__(self, "alpha_hidden", tuple(int(n) for n in self.alpha_hidden))

    def lr_at(self, step: int) -> float:
        frac = step / max(1, self.iterations - 1)
        return self.learning_rate * self.lr_decay ** frac

    def to_dict(self) -> dict:
        d = asdict(self)
        d["state_hidden"] = list(self.state_hidden)
        d["alpha_hidden"] = list(self.alpha_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["state_hidden"] = tuple(d["state_hidden"])
        d["alpha_hidden"] = tuple(d["alpha_hidden"])
        return cls(**d)


@dataclass
class Problem:
    """Everything the losses need besides the networks."""

    params: LogisticParams
    norm: NormalizationSpec
    climate: Climate
    t_data: np.ndarray  # normalised observation times
    x_data: np.ndarray

    @property
    def t_bounds(self) -> tuple[float, float]:
        return float(self.norm.time(self.climate.start)), float(self.norm.time(self.climate.end))

    def alpha_features(self, t_norm: np.ndarray) -> np.ndarray:
        T, H = self.climate(self.norm.day(t_norm))
        return self.norm.features(T, H, t_norm)


@dataclass
class TrainState:
    state_net: MlpNetwork
    alpha_net: MlpNetwork
    adam: AdamState
    config: TrainConfig
    params: LogisticParams
    norm: NormalizationSpec
    climate: Climate
    seed: int
    iteration: int = 0
    loss_history: list[tuple[float, float, float]] = field(default_factory=list)

    def alpha_at(self, days) -> np.ndarray:
        """alpha-hat at the given window days, using the stored climate."""
        return NetworkAlpha(self.alpha_net, self.norm)(*self.climate(days), days)

    def x_at(self, days) -> np.ndarray:
        t = self.norm.time(days)
        return self.state_net(np.asarray(t, dtype=np.float64).reshape(-1, 1))


class NetworkAlpha:
    """A trained alpha network as an ``AlphaFunction`` of (T, H, day)."""

    def __init__(self, net: MlpNetwork, norm: NormalizationSpec):
        self.net = net
        self.norm = norm
        self.lo = net.output_map.lo
        self.hi = net.output_map.hi

    def __call__(self, T, H, t_day):
        t_day = np.asarray(t_day, dtype=np.float64)
        feats = self.norm.features(T, H, self.norm.time(t_day)).reshape(-1, 3)
        return self.net(feats).reshape(t_day.shape)


def build_problem(series: CompositeSeries, params: LogisticParams, norm: NormalizationSpec | None = None,
                  climate: Climate | None = None, n_data: int = 0) -> Problem:
    if len(series) == 0:
        raise ValueError("empty series")
    norm = norm or NormalizationSpec.for_window(T_star=params.T_star, H_star=params.H_star)
    climate = climate or Climate.from_series(series)
    days = series.days
    x = np.asarray(series.population, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite observation in the series")
    if n_data:
        days, x = days[:n_data], x[:n_data]
    return Problem(params, norm, climate, norm.time(days), x)


def init_state(problem: Problem, config: TrainConfig) -> TrainState:
    rng = np.random.default_rng(config.seed)
    x_scale = float(np.max(np.abs(problem.x_data))) or 1.0
    state_net = init_network((1, *config.state_hidden, 1), rng, OutputMap(scale=x_scale))
    alpha_net = init_network((3, *config.alpha_hidden, 1), rng,
                             OutputMap.bounded(problem.params.alpha_min, problem.params.alpha_max))
    adam = AdamState(state_net.n_params + alpha_net.n_params, learning_rate=config.learning_rate)
    return TrainState(state_net, alpha_net, adam, config, problem.params, problem.norm,
                      problem.climate, config.seed)


# --- losses -------------------------------------------------------------------------


def loss_data(tape: Tape, state_net: MlpNetwork, theta_s, t_data, x_data):
    x_nn, _ = apply(tape, state_net, np.asarray(t_data, dtype=np.float64).reshape(-1, 1), theta_s)
    return (x_nn - np.asarray(x_data, dtype=np.float64)).square().mean()


def ode_residual(tape: Tape, state_net: MlpNetwork, alpha_net: MlpNetwork, theta_s, theta_a,
                 problem: Problem, t_colloc):
    t_colloc = np.asarray(t_colloc, dtype=np.float64)
    x_nn, dx_dt = apply(tape, state_net, t_colloc.reshape(-1, 1), theta_s, tangent_col=0)
    a_nn, _ = apply(tape, alpha_net, problem.alpha_features(t_colloc), theta_a)
    p = problem.params
    growth = x_nn * (a_nn + p.A) - x_nn.square() * p.B
    return dx_dt * (1.0 / problem.norm.t_scale) - growth


def loss_ode(tape: Tape, state_net, alpha_net, theta_s, theta_a, problem: Problem, t_colloc):
    r = ode_residual(tape, state_net, alpha_net, theta_s, theta_a, problem, t_colloc)
    if not np.all(np.isfinite(r.value)):
        bad = int(np.flatnonzero(~np.isfinite(r.value))[0])
        raise TrainingError(f"non-finite ODE residual at collocation point t={float(np.ravel(t_colloc)[bad]):g}")
    return r.square().mean()


def sample_collocation(config: TrainConfig, rng: np.random.Generator, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    return rng.uniform(lo, hi, size=config.n_colloc)


@dataclass
class LossEval:
    data: float
    ode: float
    total: float
    grad: np.ndarray


def evaluate_loss(state: TrainState, problem: Problem, t_colloc, want_grad: bool = True) -> LossEval:
    """Total loss and its gradient w.r.t. ``concat(state theta, alpha theta)``."""
    cfg = state.config
    tape = Tape()
    th_s = tape.leaf(state.state_net.theta, name="state_theta")
    th_a = tape.leaf(state.alpha_net.theta, name="alpha_theta")
    ld = loss_data(tape, state.state_net, th_s, problem.t_data, problem.x_data)
    lo = loss_ode(tape, state.state_net, state.alpha_net, th_s, th_a, problem, t_colloc)
    total = ld * cfg.lambda_data + lo * cfg.lambda_ode
    grad = None
    if want_grad:
        tape.backward(total)
        gs = th_s.grad if th_s.grad is not None else np.zeros_like(th_s.value)
        ga = th_a.grad if th_a.grad is not None else np.zeros_like(th_a.value)
        grad = np.concatenate([gs, ga])
    return LossEval(float(ld.value), float(lo.value), float(total.value), grad)


def _theta(state: TrainState) -> np.ndarray:
    return np.concatenate([state.state_net.theta, state.alpha_net.theta])


def _set_theta(state: TrainState, theta: np.ndarray) -> None:
    n = state.state_net.n_params
    state.state_net.set_theta(theta[:n])
    state.alpha_net.set_theta(theta[n:])


def train(series: CompositeSeries, params: LogisticParams, config: TrainConfig,
          climate: Climate | None = None, norm: NormalizationSpec | None = None,
          progress_every: int = 0, state: TrainState | None = None) -> TrainState:
    """Run ``config.iterations`` Adam steps on the joint loss and return the state."""
    problem = build_problem(series, params, norm, climate, config.n_data)
    if state is None:
        state = init_state(problem, config)
    rng = np.random.default_rng([config.seed, 1])
    lo, hi = problem.t_bounds
    if config.colloc_resample:
        # resuming: replay the draws already consumed so the sequence matches an uninterrupted run
        for _ in range(state.iteration):
            sample_collocation(config, rng, lo, hi)
    t_colloc = sample_collocation(config, rng, lo, hi)
    theta = _theta(state)
    first = state.iteration
    for it in range(first, config.iterations):
        if config.colloc_resample and it > first:
            t_colloc = sample_collocation(config, rng, lo, hi)
        ev = evaluate_loss(state, problem, t_colloc)
        if not math.isfinite(ev.total):
            comp = "loss_data" if not math.isfinite(ev.data) else "loss_ode"
            raise TrainingError(f"non-finite {comp} at iteration {it}")
        state.loss_history.append((ev.data, ev.ode, ev.total))
        state.adam.learning_rate = config.lr_at(it)
        try:
            adam_step(theta, ev.grad, state.adam, label="total loss")
        except NonFiniteGradient as exc:
            raise TrainingError(f"iteration {it}: {exc}") from None
        _set_theta(state, theta)
        state.iteration = it + 1
        if progress_every and (it % progress_every == 0 or it == config.iterations - 1):
            log.info("iter %6d  data %.4g  ode %.4g  total %.4g", it, ev.data, ev.ode, ev.total)
    hist = state.loss_history
    if hist and hist[-1][2] > hist[0][2]:
        warnings.warn(f"final loss {hist[-1][2]:.4g} above initial {hist[0][2]:.4g}", ConvergenceWarning)
    return state


# --- alpha extraction ---------------------------------------------------------------


@dataclass(frozen=True)
class AlphaSeries:
    t_day: np.ndarray
    alpha: np.ndarray
    growth_threshold: float = 0.0
    baseline: float = -0.372

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_day", "alpha_hat"])
            for t, a in zip(self.t_day, self.alpha):
                w.writerow([repr(float(t)), repr(float(a))])


def extract_alpha(state: TrainState, climate: Climate | None = None, grid=None) -> AlphaSeries:
    """Evaluate alpha-hat on ``grid`` (window days; defaults to the daily grid)."""
    climate = climate or state.climate
    if grid is None:
        grid = climate.days
    grid = np.asarray(grid, dtype=np.float64)
    if not climate.covers(float(grid.min()), float(grid.max())):
        raise ValueError(f"grid {grid.min():g}..{grid.max():g} outside the climate window "
                         f"{climate.start:g}..{climate.end:g}")
    T, H = climate(grid)
    alpha = NetworkAlpha(state.alpha_net, state.norm)(T, H, grid)
    return AlphaSeries(grid, alpha, 0.0, -state.params.A)


# --- checkpoint ---------------------------------------------------------------------


def state_to_dict(state: TrainState) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "seed": state.seed,
        "iteration": state.iteration,
        "config": state.config.to_dict(),
        "params": state.params.to_dict(),
        "normalization": state.norm.to_dict(),
        "climate": {"days": state.climate.days.tolist(), "temp_c": state.climate.temperature.tolist(),
                    "rh_pct": state.climate.humidity.tolist()},
        "state_net": network_to_dict(state.state_net),
        "alpha_net": network_to_dict(state.alpha_net),
        "adam": {"learning_rate": state.adam.learning_rate, "beta1": state.adam.beta1,
                 "beta2": state.adam.beta2, "epsilon": state.adam.epsilon,
                 "step_count": state.adam.step_count,
                 "first_moment": state.adam.first_moment.tolist(),
                 "second_moment": state.adam.second_moment.tolist()},
        "loss_history": [list(row) for row in state.loss_history],
        "kernel_backend": kernels.BACKEND,
    }


def state_from_dict(d: dict) -> TrainState:
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a pcmnn training checkpoint")
    if d.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('version')}")
    state_net = network_from_dict(d["state_net"])
    alpha_net = network_from_dict(d["alpha_net"])
    a = d["adam"]
    adam = AdamState(state_net.n_params + alpha_net.n_params, a["learning_rate"], a["beta1"], a["beta2"],
                     a["epsilon"], a["step_count"], np.asarray(a["first_moment"], dtype=np.float64),
                     np.asarray(a["second_moment"], dtype=np.float64))
    c = d["climate"]
    return TrainState(state_net, alpha_net, adam, TrainConfig.from_dict(d["config"]),
                      LogisticParams(**d["params"]), NormalizationSpec.from_dict(d["normalization"]),
                      Climate(c["days"], c["temp_c"], c["rh_pct"]), int(d["seed"]), int(d["iteration"]),
                      [tuple(row) for row in d["loss_history"]])


def save_state(state: TrainState, path) -> None:
    Path(path).write_text(json.dumps(state_to_dict(state)) + "\n", encoding="utf-8")


def load_state(path) -> TrainState:
    return state_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def write_fit_csv(state: TrainState, series: CompositeSeries, path) -> None:
    x_fit = state.x_at(series.days)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_day", "x_obs", "x_fit"])
        for t, xo, xf in zip(series.days, series.population, x_fit):
            w.writerow([repr(float(t)), repr(float(xo)), repr(float(xf))])


def write_loss_csv(state: TrainState, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "loss_data", "loss_ode", "loss_total"])
        for i, (a, b, c) in enumerate(state.loss_history):
            w.writerow([i, repr(a), repr(b), repr(c)])
