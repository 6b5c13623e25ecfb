import json
import subprocess
import sys

import pytest

from pcmnn.cli import OPTIONS, run

FAST = ["--iterations", "60", "--state_hidden", "8,8", "--alpha_hidden", "8", "--n_colloc", "20"]


def _err_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return err[-1], "\n".join(err)


@pytest.fixture
def bench(tmp_path):
    out = tmp_path / "run"
    assert run(["synth", "--scenario", "bench", "--output", str(out)]) == 0
    return out


def test_synth_writes_data_and_truth(bench):
    assert {p.name for p in bench.iterdir()} >= {"data.csv", "truth.csv", "composite.csv", "manifest-synth.json"}
    man = json.loads((bench / "manifest-synth.json").read_text())
    assert man["subcommand"] == "synth" and man["seed"] == 42
    assert set(man["outputs"]) == {"data.csv", "truth.csv", "composite.csv"}


def test_pipeline_end_to_end(bench, capsys):
    data = str(bench / "data.csv")
    out = str(bench)
    assert run(["train", "--input", data, "--output", out, *FAST]) == 0
    assert run(["verify", "--input", data, "--output", out, "--M1", "4", "--M2", "25"]) == 0
    assert run(["evaluate", "--input", data, "--output", out, "--truth", str(bench / "truth.csv")]) == 0
    assert run(["forecast", "--input", data, "--output", out, "--t_start", "20"]) == 0
    for name in ("alpha.csv", "fit.csv", "metrics.csv", "loss_history.csv", "checkpoint.json", "backsolve.csv",
                 "verify.txt", "evaluation.csv", "recovery.txt", "forecast.csv"):
        assert (bench / name).is_file(), name
    assert (bench / "alpha.csv").read_text().startswith("t_day,alpha_hat\n")
    assert (bench / "metrics.csv").read_text().splitlines()[0] == "label,n,mse,mae,r2"
    assert "sign diagnostic" in (bench / "verify.txt").read_text()
    assert len((bench / "forecast.csv").read_text().splitlines()) == 11
    assert len((bench / "loss_history.csv").read_text().splitlines()) == 61


def test_prefit_and_preprocess(bench):
    out = str(bench)
    assert run(["preprocess", "--input", str(bench / "data.csv"), "--output", out]) == 0
    assert (bench / "composite.csv").read_text().splitlines()[0] == "day_index,date,population,temp_c,rh_pct"
    assert run(["prefit", "--input", str(bench / "composite.csv"), "--output", out, "--fix-x0", "true"]) == 0
    assert "A = " in (bench / "prefit.txt").read_text()
    assert run(["train", "--input", str(bench / "data.csv"), "--output", out, "--params_from",
                str(bench / "prefit.txt"), *FAST]) == 0
    ck = json.loads((bench / "checkpoint.json").read_text())
    assert ck["params"]["A"] != 0.372


def test_train_without_input_is_a_usage_error(tmp_path, capsys):
    assert run(["train", "--output", str(tmp_path)]) == 1
    line, err = _err_line(capsys)
    assert "usage: pcmnn train" in err
    assert line.startswith("pcmnn-error code=1 kind=usage message=")


@pytest.mark.parametrize("argv", [[], ["bogus"], ["train", "--no-such-flag", "1"], ["train", "--iterations", "x"],
                                  ["train", "--input", "a.csv", "--iterations", "0"]])
def test_usage_errors(argv, capsys, tmp_path):
    assert run(argv + (["--output", str(tmp_path)] if argv and argv[0] == "train" else [])) == 1
    assert _err_line(capsys)[0].startswith("pcmnn-error code=1")


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("iterations = 5\ncolour = red\n")
    assert run(["train", "--config", str(cfg), "--input", "x.csv"]) == 1
    assert "colour" in _err_line(capsys)[0]


def test_missing_input_is_a_data_error(tmp_path, capsys):
    assert run(["train", "--input", str(tmp_path / "none.csv"), "--output", str(tmp_path)]) == 2
    assert _err_line(capsys)[0].startswith("pcmnn-error code=2 kind=data")


def test_bad_row_is_a_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("year,month,day,male_count,temp_c,rh_pct\n2021,8,1,-3,23.5,80\n")
    assert run(["preprocess", "--input", str(bad), "--output", str(tmp_path)]) == 2
    assert ":2:" in _err_line(capsys)[0]


def test_numerical_failure_exit_code(bench, capsys):
    data, out = str(bench / "data.csv"), str(bench)
    assert run(["train", "--input", data, "--output", out, *FAST]) == 0
    ck = json.loads((bench / "checkpoint.json").read_text())
    ck["alpha_net"]["biases"][-1][0] = float("nan")
    (bench / "checkpoint.json").write_text(json.dumps(ck))
    assert run(["verify", "--input", data, "--output", out]) == 3
    assert _err_line(capsys)[0].startswith("pcmnn-error code=3 kind=numerical")


def test_flag_beats_config_and_env_beats_config(bench, monkeypatch):
    cfg = bench / "c.cfg"
    cfg.write_text("seed = 5\niterations = 7\nstate_hidden = 4\nalpha_hidden = 4\nn_colloc = 4\n")
    data = str(bench / "data.csv")
    assert run(["train", "--config", str(cfg), "--input", data, "--output", str(bench / "a"), "--iterations", "3"]) == 0
    man = json.loads((bench / "a" / "manifest-train.json").read_text())
    assert man["config"]["iterations"] == "3" and man["seed"] == 5
    monkeypatch.setenv("PCMNN_SEED", "11")
    assert run(["train", "--config", str(cfg), "--input", data, "--output", str(bench / "b")]) == 0
    assert json.loads((bench / "b" / "manifest-train.json").read_text())["seed"] == 11
    assert run(["train", "--config", str(cfg), "--input", data, "--output", str(bench / "c"), "--seed", "2"]) == 0
    assert json.loads((bench / "c" / "manifest-train.json").read_text())["seed"] == 2


def test_reruns_are_byte_identical(bench):
    data = str(bench / "data.csv")
    for name in ("a", "b"):
        assert run(["train", "--input", data, "--output", str(bench / name), *FAST]) == 0
    for f in ("fit.csv", "alpha.csv", "loss_history.csv", "metrics.csv", "checkpoint.json"):
        assert (bench / "a" / f).read_bytes() == (bench / "b" / f).read_bytes(), f


def test_manifest_replays_the_run(bench):
    data = str(bench / "data.csv")
    assert run(["train", "--input", data, "--output", str(bench / "a"), *FAST]) == 0
    man = bench / "a" / "manifest-train.json"
    assert run(["train", "--manifest", str(man), "--output", str(bench / "r")]) == 0
    recorded = json.loads(man.read_text())["outputs"]
    replayed = json.loads((bench / "r" / "manifest-train.json").read_text())["outputs"]
    assert recorded == replayed
    # a manifest belongs to one subcommand
    assert run(["verify", "--manifest", str(man)]) == 1


def test_every_option_has_a_default_except_paths():
    for key, opt in OPTIONS.items():
        if opt.kind == "paths":
            assert opt.default == ""
        assert isinstance(opt.default, str)


def test_module_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "pcmnn", "train", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "--lambda_ode" in res.stdout and "--n_colloc" in res.stdout
