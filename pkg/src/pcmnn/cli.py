"""``pcmnn`` command-line driver.

Every subcommand reads the same flat ``key = value`` configuration. Values
resolve in this order, later winning: built-in defaults, ``--config`` file,
``PCMNN_SEED`` (seed only), command-line flags. Unknown keys are errors.

Each run writes its outputs into ``--output`` together with
``manifest-<subcommand>.json``: the resolved configuration, seed, package and
library versions, kernel backend, and sha256 checksums of inputs and outputs.
``pcmnn <subcommand> --manifest FILE`` replays a run from its manifest.

Exit status: 0 ok, 1 usage, 2 data, 3 numerical failure. Failures print a
single line ``pcmnn-error code=N kind=KIND message="..."`` on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, kernels
from .dynamics import Climate, LogisticParams, sign_diagnostic
from .evaluate import forecast, metrics, metrics_table, verify_backsolve, write_metrics_csv
from .ingest import (CompositeSeries, DataError, composite, is_composite_file, load_composite, load_csv,
                     window, write_composite, write_records)
from .pinn import (TrainConfig, extract_alpha, load_state, save_state, train, write_fit_csv,
                   write_loss_csv)
from .prefit import fit_logistic, write_fit_curve, write_result_csv
from .synth import GroundTruth, _bool, generate, load_scenario, parse_kv, score_recovery

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
MANIFEST_FORMAT = "pcmnn-manifest"
SUBCOMMANDS = ("preprocess", "prefit", "train", "verify", "forecast", "evaluate", "synth")


class UsageError(Exception):
    pass


# --- configuration --------------------------------------------------------------------


@dataclass(frozen=True)
class Option:
    default: str
    kind: str  # str | int | float | bool | paths | ints | optfloat
    help: str


_TC = TrainConfig()
_LP = LogisticParams()

OPTIONS: dict[str, Option] = {
    # paths
    "input": Option("", "paths", "input CSV(s), raw or composite; comma-separated"),
    "output": Option("run", "str", "run directory"),
    "checkpoint": Option("", "str", "training checkpoint (default <output>/checkpoint.json)"),
    "scenario": Option("", "str", "synth scenario file, or 'bench' for the packaged benchmark"),
    "truth": Option("", "str", "ground-truth CSV written by synth (evaluate)"),
    "climate_input": Option("", "str", "CSV supplying the forecast climate (default: input, else checkpoint)"),
    "params_from": Option("", "str", "prefit.txt whose A and B replace the configured ones"),
    # preprocessing
    "years": Option("", "ints", "years to composite (default: all present)"),
    # growth model
    "A": Option(repr(_LP.A), "float", "intrinsic growth rate"),
    "B": Option(repr(_LP.B), "float", "density limitation"),
    "T_star": Option(repr(_LP.T_star), "float", "thermal optimum"),
    "H_star": Option(repr(_LP.H_star), "float", "hygric optimum"),
    "alpha_min": Option(repr(_LP.alpha_min), "float", "lower bound of alpha"),
    "alpha_max": Option(repr(_LP.alpha_max), "float", "upper bound of alpha"),
    # training
    "n_data": Option(str(_TC.n_data), "int", "use the first N observations (0 = all)"),
    "n_colloc": Option(str(_TC.n_colloc), "int", "collocation points per iteration"),
    "lambda_data": Option(repr(_TC.lambda_data), "float", "data-loss weight"),
    "lambda_ode": Option(repr(_TC.lambda_ode), "float", "ODE-loss weight"),
    "iterations": Option(str(_TC.iterations), "int", "Adam iterations"),
    "seed": Option(str(_TC.seed), "int", "random seed"),
    "colloc_resample": Option(str(_TC.colloc_resample).lower(), "bool", "redraw collocation points every step"),
    "learning_rate": Option(repr(_TC.learning_rate), "float", "initial Adam learning rate"),
    "lr_decay": Option(repr(_TC.lr_decay), "float", "final/initial learning-rate ratio"),
    "state_hidden": Option(",".join(map(str, _TC.state_hidden)), "ints", "state-network hidden widths"),
    "alpha_hidden": Option(",".join(map(str, _TC.alpha_hidden)), "ints", "alpha-network hidden widths"),
    "progress_every": Option("0", "int", "log training progress every N iterations (0 = quiet)"),
    # prefit
    "day_start": Option("0", "int", "first day_index of the prefit range"),
    "day_end": Option("21", "int", "last day_index of the prefit range"),
    "fix_x0": Option("false", "bool", "hold x0 at the first observation in the prefit"),
    # integration, forecasting, scoring
    "step": Option("0.01", "float", "RK4 substep in days"),
    "x0": Option("", "optfloat", "forecast initial population (default: observation at t_start)"),
    "t_start": Option("", "optfloat", "forecast start day (default: first climate day)"),
    "horizon": Option("-1", "int", "forecast horizon in days (-1 = to the end of the climate)"),
    "score_start": Option("0", "int", "first day_index scored by evaluate"),
    "score_end": Option("-1", "int", "last day_index scored by evaluate (-1 = last)"),
    "M1": Option("", "optfloat", "sign diagnostic temperature threshold"),
    "M2": Option("", "optfloat", "sign diagnostic humidity threshold"),
}

TRAIN_KEYS = ("n_data", "n_colloc", "lambda_data", "lambda_ode", "iterations", "seed", "colloc_resample",
              "learning_rate", "lr_decay", "state_hidden", "alpha_hidden")
PARAM_KEYS = ("A", "B", "T_star", "H_star", "alpha_min", "alpha_max")


def _convert(key: str, raw: str):
    kind = OPTIONS[key].kind
    try:
        if kind == "str":
            return raw
        if kind == "paths":
            return tuple(p.strip() for p in raw.split(",") if p.strip())
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "optfloat":
            return float(raw) if raw.strip() else None
        if kind == "bool":
            return _bool(raw)
        if kind == "ints":
            return tuple(int(p) for p in raw.split(",") if p.strip())
    except ValueError as exc:
        raise UsageError(f"bad value for {key}: {raw!r} ({exc})") from None
    raise AssertionError(kind)


class RunConfig:
    """Resolved string values for every key in ``OPTIONS``, plus typed access."""

    def __init__(self, raw: dict[str, str]):
        unknown = sorted(set(raw) - set(OPTIONS))
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
        self.raw = {k: raw.get(k, opt.default) for k, opt in OPTIONS.items()}
        self.values = {k: _convert(k, v) for k, v in self.raw.items()}

    def __getitem__(self, key: str):
        return self.values[key]

    def params(self) -> LogisticParams:
        kw = {k: self[k] for k in PARAM_KEYS}
        if self["params_from"]:
            pf = parse_kv(Path(self["params_from"]).read_text(encoding="utf-8"), self["params_from"])
            kw["A"], kw["B"] = float(pf["A"]), float(pf["B"])
        try:
            return LogisticParams(**kw)
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig(**{k: self[k] for k in TRAIN_KEYS})
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    @property
    def out_dir(self) -> Path:
        return Path(self["output"])

    @property
    def checkpoint(self) -> Path:
        return Path(self["checkpoint"]) if self["checkpoint"] else self.out_dir / "checkpoint.json"


def resolve_config(args: argparse.Namespace, environ=os.environ) -> RunConfig:
    raw: dict[str, str] = {}
    if args.manifest:
        man = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        if man.get("format") != MANIFEST_FORMAT:
            raise UsageError(f"{args.manifest}: not a pcmnn manifest")
        if man.get("subcommand") != args.command:
            raise UsageError(f"manifest is for '{man.get('subcommand')}', not '{args.command}'")
        raw.update(man["config"])
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"no such config file: {path}")
        try:
            raw.update(parse_kv(path.read_text(encoding="utf-8"), str(path)))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if environ.get("PCMNN_SEED"):
        raw["seed"] = environ["PCMNN_SEED"]
    for key in OPTIONS:
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    return RunConfig(raw)


# --- manifest -------------------------------------------------------------------------


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions() -> dict:
    import scipy

    return {"pcmnn": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def write_manifest(cfg: RunConfig, command: str, inputs: list[Path], outputs: list[Path]) -> Path:
    man = {
        "format": MANIFEST_FORMAT,
        "version": 1,
        "subcommand": command,
        "seed": cfg["seed"],
        "kernel_backend": kernels.BACKEND,
        "versions": _versions(),
        "config": cfg.raw,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {p.name: sha256_file(p) for p in outputs},
    }
    path = cfg.out_dir / f"manifest-{command}.json"
    path.write_text(json.dumps(man, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# --- shared loading -------------------------------------------------------------------


def _read_series(paths, years=()) -> CompositeSeries:
    paths = [Path(p) for p in paths]
    for p in paths:
        if not p.is_file():
            raise DataError(f"no such input file: {p}")
    if len(paths) == 1 and is_composite_file(paths[0]):
        return load_composite(paths[0])
    records = []
    for p in paths:
        if is_composite_file(p):
            raise DataError(f"{p}: composite files cannot be mixed with raw input")
        records.extend(load_csv(p))
    recs = window(records)
    yrs = years or sorted({r.year for r in recs})
    return composite(recs, yrs)


def _require(cfg: RunConfig, key: str, what: str):
    if not cfg[key]:
        raise UsageError(f"{what} requires --{key.replace('_', '-')}")
    return cfg[key]


def _load_checkpoint(cfg: RunConfig):
    path = cfg.checkpoint
    if not path.is_file():
        raise DataError(f"no such checkpoint: {path}")
    try:
        return load_state(path), path
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from None


def _score_range(cfg: RunConfig, days: np.ndarray) -> np.ndarray:
    end = cfg["score_end"] if cfg["score_end"] >= 0 else days.max()
    mask = (days >= cfg["score_start"]) & (days <= end)
    if mask.sum() < 2:
        raise UsageError(f"score range {cfg['score_start']}..{end} holds fewer than two days")
    return mask


# --- subcommands ----------------------------------------------------------------------
# each returns (inputs, outputs) for the manifest


def cmd_preprocess(cfg: RunConfig):
    inputs = [Path(p) for p in _require(cfg, "input", "preprocess")]
    series = _read_series(inputs, cfg["years"])
    out = cfg.out_dir / "composite.csv"
    write_composite(series, out)
    return inputs, [out]


def cmd_prefit(cfg: RunConfig):
    inputs = [Path(p) for p in _require(cfg, "input", "prefit")]
    series = _read_series(inputs, cfg["years"])
    res = fit_logistic(series, (cfg["day_start"], cfg["day_end"]), cfg["fix_x0"])
    if not res.converged or not np.isfinite(res.sse):
        raise ArithmeticError(f"prefit did not converge: {res.message or 'iteration limit'}")
    outs = [cfg.out_dir / "prefit.txt", cfg.out_dir / "prefit.csv", cfg.out_dir / "prefit_curve.csv"]
    outs[0].write_text(res.as_kv(), encoding="utf-8")
    write_result_csv(res, outs[1])
    write_fit_curve(res, series, outs[2])
    return inputs, outs


def cmd_train(cfg: RunConfig):
    inputs = [Path(p) for p in _require(cfg, "input", "train")]
    tcfg = cfg.train_config()
    params = cfg.params()
    series = _read_series(inputs, cfg["years"])
    if cfg["params_from"]:
        inputs.append(Path(cfg["params_from"]))
    state = train(series, params, tcfg, progress_every=cfg["progress_every"])
    d = cfg.out_dir
    ckpt = cfg.checkpoint
    save_state(state, ckpt)
    outs = [ckpt, d / "fit.csv", d / "alpha.csv", d / "loss_history.csv", d / "metrics.csv"]
    write_fit_csv(state, series, outs[1])
    extract_alpha(state).write_csv(outs[2])
    write_loss_csv(state, outs[3])
    write_metrics_csv([metrics(series.population, state.x_at(series.days), label="fit")], outs[4])
    return inputs, outs


def cmd_verify(cfg: RunConfig):
    inputs = [Path(p) for p in _require(cfg, "input", "verify")]
    series = _read_series(inputs, cfg["years"])
    state, ckpt = _load_checkpoint(cfg)
    inputs.append(ckpt)
    bs = verify_backsolve(state, state.params, series, h=cfg["step"])
    fit = metrics(series.population, bs.x_nn, label="fit")
    d = cfg.out_dir
    outs = [d / "backsolve.csv", d / "metrics.csv", d / "verify.txt"]
    with outs[0].open("w", encoding="utf-8") as fh:
        fh.write("t_day,x_obs,x_nn,x_backsolve\n")
        for t, xo, xn, xb in zip(series.days, series.population, bs.x_nn, bs.trajectory.x):
            fh.write(f"{float(t)!r},{float(xo)!r},{float(xn)!r},{float(xb)!r}\n")
    write_metrics_csv([fit, bs.metrics], outs[1])
    report = [f"relative_gap = {bs.relative_gap!r}", f"n_clipped = {bs.trajectory.n_clipped}"]
    text = "\n".join(report) + "\n"
    if cfg["M1"] is not None and cfg["M2"] is not None:
        a = extract_alpha(state, Climate.from_series(series), series.days)
        text += sign_diagnostic(a.alpha, series.temperature, series.humidity, state.params,
                                cfg["M1"], cfg["M2"]).report()
    outs[2].write_text(text, encoding="utf-8")
    return inputs, outs


def cmd_forecast(cfg: RunConfig):
    state, ckpt = _load_checkpoint(cfg)
    inputs = [ckpt]
    series = None
    if cfg["input"]:
        inputs += [Path(p) for p in cfg["input"]]
        series = _read_series(cfg["input"], cfg["years"])
    if cfg["climate_input"]:
        inputs.append(Path(cfg["climate_input"]))
        climate = Climate.from_series(_read_series([cfg["climate_input"]], cfg["years"]))
    elif series is not None:
        climate = Climate.from_series(series)
    else:
        climate = state.climate
    t0 = climate.start if cfg["t_start"] is None else cfg["t_start"]
    x0 = cfg["x0"]
    if x0 is None:
        if series is None:
            raise UsageError("forecast needs --x0 or --input to take the starting observation from")
        hit = np.nonzero(series.days == t0)[0]
        if hit.size == 0:
            raise DataError(f"no observation on day {t0:g} to start from")
        x0 = float(series.population[hit[0]])
    horizon = cfg["horizon"] if cfg["horizon"] >= 0 else int(round(climate.end - t0))
    traj = forecast(state, state.params, x0, climate, horizon, t_start=t0, h=cfg["step"])
    out = cfg.out_dir / "forecast.csv"
    traj.write_csv(out)
    return inputs, [out]


def cmd_evaluate(cfg: RunConfig):
    inputs = [Path(p) for p in _require(cfg, "input", "evaluate")]
    series = _read_series(inputs, cfg["years"])
    state, ckpt = _load_checkpoint(cfg)
    inputs.append(ckpt)
    days = series.days
    mask = _score_range(cfg, days)
    bs = verify_backsolve(state, state.params, series, h=cfg["step"])
    reports = [metrics(series.population[mask], bs.x_nn[mask], label="fit"),
               metrics(series.population[mask], bs.trajectory.x[mask], label="backsolve")]
    d = cfg.out_dir
    outs = [d / "evaluation.csv", d / "evaluation.txt"]
    extra = ""
    if cfg["truth"]:
        truth_path = Path(cfg["truth"])
        inputs.append(truth_path)
        try:
            truth = GroundTruth.read_csv(truth_path)
        except (OSError, ValueError, IndexError) as exc:
            raise DataError(f"{truth_path}: {exc}") from None
        tmask = _score_range(cfg, truth.day_index.astype(float))
        rec = score_recovery(state, truth)
        x_nn = state.x_at(truth.day_index.astype(float))
        reports += [metrics(truth.x_true[tmask], x_nn[tmask], label="fit_vs_truth"),
                    metrics(truth.x_true[tmask], bs.trajectory.x[tmask], label="backsolve_vs_truth")]
        extra = rec.as_kv()
        outs.append(d / "recovery.txt")
        outs[-1].write_text(extra, encoding="utf-8")
    write_metrics_csv(reports, outs[0])
    outs[1].write_text(metrics_table(reports), encoding="utf-8")
    return inputs, outs


def cmd_synth(cfg: RunConfig):
    name = _require(cfg, "scenario", "synth")
    if name == "bench":
        path = Path(str(resources.files("pcmnn") / "data" / "bench.cfg"))
    else:
        path = Path(name)
        if not path.is_file():
            raise DataError(f"no such scenario file: {path}")
    try:
        scen = load_scenario(path)
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from None
    gen = generate(scen)
    d = cfg.out_dir
    outs = [d / "composite.csv", d / "truth.csv"]
    write_composite(gen.series, outs[0])
    gen.truth.write_csv(outs[1])
    if gen.records:
        outs.append(d / "data.csv")
        write_records(gen.records, outs[-1])
    return [path], outs


COMMANDS: dict[str, Callable] = {
    "preprocess": cmd_preprocess, "prefit": cmd_prefit, "train": cmd_train, "verify": cmd_verify,
    "forecast": cmd_forecast, "evaluate": cmd_evaluate, "synth": cmd_synth,
}

HELP = {
    "preprocess": "window and composite raw trap CSVs into composite.csv",
    "prefit": "least-squares logistic fit of A, B, x0 on the early window",
    "train": "train the state and alpha networks; writes checkpoint, fit, alpha, loss history",
    "verify": "RK4 back-solve with alpha-hat from the first observation",
    "forecast": "integrate forward with alpha-hat on a supplied climate",
    "evaluate": "MSE, MAE, R2 of fit and back-solve (and recovery scores with --truth)",
    "synth": "generate a synthetic dataset with known alpha",
}


# --- argument parsing -----------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pcmnn", description="Climate-modulated logistic PINN toolkit.")
    parser.add_argument("--version", action="version", version=f"pcmnn {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=HELP[name], description=HELP[name],
                           usage=f"pcmnn {name} [--config FILE] [--manifest FILE] [--KEY VALUE ...]")
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--manifest", help="replay the configuration recorded in a manifest")
        for key, opt in OPTIONS.items():
            flags = [f"--{key}"] + ([f"--{key.replace('_', '-')}"] if "_" in key else [])
            p.add_argument(*flags, dest=key, default=None, metavar=opt.kind.upper(),
                           help=f"{opt.help} [default: {opt.default or 'none'}]")
    return parser


def _fail(code: int, kind: str, message: str) -> int:
    message = " ".join(str(message).split())
    print(f"pcmnn-error code={code} kind={kind} message={json.dumps(message)}", file=sys.stderr)
    return code


def _print_usage(parser: argparse.ArgumentParser, command: str | None) -> None:
    subs = parser._subparsers._group_actions[0].choices if parser._subparsers else {}
    (subs.get(command) or parser).print_usage(sys.stderr)


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    command = next((a for a in argv if a in SUBCOMMANDS), None)
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("missing subcommand")
        cfg = resolve_config(args)
    except UsageError as exc:
        _print_usage(parser, command)
        return _fail(EXIT_USAGE, "usage", exc)
    except (OSError, ValueError, KeyError) as exc:
        return _fail(EXIT_USAGE, "usage", exc)
    try:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        inputs, outputs = COMMANDS[args.command](cfg)
        write_manifest(cfg, args.command, inputs, outputs)
    except UsageError as exc:
        _print_usage(parser, command)
        return _fail(EXIT_USAGE, "usage", exc)
    except ArithmeticError as exc:  # TrainingError, IntegrationError, prefit failure
        return _fail(EXIT_NUMERIC, "numerical", exc)
    except (DataError, OSError, ValueError, KeyError) as exc:
        return _fail(EXIT_DATA, "data", exc)
    return EXIT_OK


def main() -> None:
    sys.exit(run())
