import numpy as np
import pytest

from pcmnn.dynamics import Climate, ConstantAlpha, LogisticParams, SinusoidalAlpha, integrate_rk4, logistic_closed_form
from pcmnn.ingest import composite, load_csv, write_records
from pcmnn.prefit import fit_logistic
from pcmnn.synth import (BENCHMARK_SCENARIO_TEXT, GroundTruth, Scenario, alpha_rmse, benchmark_scenario, generate,
                         load_scenario, parse_kv, scenario_from_dict, score_recovery)

from helpers import state_with_constant_alpha

P = LogisticParams()


def test_noiseless_unmodulated_matches_closed_form():
    g = generate(Scenario(alpha_true=ConstantAlpha(0.0), noise_sd=0.0, quantize=False))
    assert np.allclose(g.series.population, logistic_closed_form(P, 2.0, np.arange(30.0)), rtol=1e-8)
    assert np.array_equal(g.series.population, g.truth.x_true)


def test_same_seed_same_observations():
    a = generate(benchmark_scenario())
    b = generate(benchmark_scenario())
    c = generate(benchmark_scenario(seed=43))
    assert np.array_equal(a.series.population, b.series.population)
    assert not np.array_equal(a.series.population, c.series.population)


def test_modulation_sign_pattern():
    # alpha > 0 on days 0..15 lifts the trajectory above the plain logistic; once alpha
    # turns negative the lead is used up and the curve ends below it, crossing once
    t = np.arange(30.0)
    mod = integrate_rk4(P, SinusoidalAlpha(), 2.0, None, t).x
    plain = integrate_rk4(P, ConstantAlpha(), 2.0, None, t).x
    d = mod - plain
    assert np.all(d[1:16] > 0) and np.all(d[25:] < 0)
    assert np.count_nonzero(np.diff(np.sign(d[1:]))) == 1
    assert np.argmax(d) < 15 < np.argmin(d)


def test_noise_level_sanity():
    for seed in range(5):
        g = generate(benchmark_scenario(noise_sd=5.0, quantize=False, seed=seed))
        inside = g.truth.x_true > 30  # clipping at zero only bites near the start
        sd = np.std(g.series.population[inside] - g.truth.x_true[inside], ddof=1)
        assert 0.75 * 5.0 <= sd <= 1.25 * 5.0


def test_quantized_observations_round_trip(tmp_path):
    g = generate(benchmark_scenario())
    assert np.all(g.series.population % 2 == 0)
    write_records(g.records, tmp_path / "d.csv")
    comp = composite(load_csv(tmp_path / "d.csv"), [2021])
    assert np.array_equal(comp.population, g.series.population)
    assert np.array_equal(comp.temperature, g.series.temperature)


def test_prefit_recovers_generating_parameters():
    g = generate(Scenario(alpha_true=ConstantAlpha(0.0), noise_sd=0.0, quantize=False))
    res = fit_logistic(g.series, (0, 21))
    assert res.A_hat == pytest.approx(0.372, rel=0.01)
    assert res.B_hat == pytest.approx(0.0008, rel=0.05)


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(noise_sd=-1.0)
    with pytest.raises(ValueError):
        Scenario(x0=0.0)
    with pytest.raises(ValueError):
        Scenario(alpha_true=ConstantAlpha(0.9, lo=-2, hi=2))


def test_benchmark_text_is_the_default_scenario():
    s = scenario_from_dict(parse_kv(BENCHMARK_SCENARIO_TEXT))
    d = benchmark_scenario()
    assert s.params == d.params and s.alpha_true == d.alpha_true
    assert (s.x0, s.noise_sd, s.seed) == (2.0, 2.0, 42)
    assert np.array_equal(generate(s).series.population, generate(d).series.population)


def test_scenario_file_variants(tmp_path):
    (tmp_path / "s.cfg").write_text("alpha = constant\nalpha_value = -0.2\nclimate = sine\nnoise_sd = 0\n")
    s = load_scenario(tmp_path / "s.cfg")
    assert s.alpha_true.value == -0.2 and s.climate.temperature.std() > 0
    with pytest.raises(ValueError, match="unknown"):
        scenario_from_dict({"colour": "red"})
    with pytest.raises(ValueError):
        parse_kv("no equals sign here")


def test_ground_truth_csv_round_trip(tmp_path):
    g = generate(benchmark_scenario())
    g.truth.write_csv(tmp_path / "t.csv")
    back = GroundTruth.read_csv(tmp_path / "t.csv")
    assert np.array_equal(back.x_true, g.truth.x_true)
    assert np.array_equal(back.alpha_true, g.truth.alpha_true)


def test_alpha_rmse_examples():
    a = np.sin(np.arange(30.0))
    assert alpha_rmse(a, a) == 0.0
    assert alpha_rmse(a + 0.25, a) == pytest.approx(0.25)
    with pytest.raises(ValueError, match="mismatch"):
        alpha_rmse(a[:5], a)


def test_score_recovery_with_exact_alpha():
    g = generate(Scenario(alpha_true=ConstantAlpha(-0.1), noise_sd=0.0, quantize=False))
    state = state_with_constant_alpha(g.series, -0.1)
    rep = score_recovery(state, g.truth)
    assert rep.alpha_rmse < 1e-12
    assert rep.forecast.r2 > 0.999999
    shifted = state_with_constant_alpha(g.series, 0.05)
    assert score_recovery(shifted, g.truth).alpha_rmse == pytest.approx(0.15, rel=1e-9)


def test_score_recovery_grid_outside_training_window():
    g = generate(benchmark_scenario())
    state = state_with_constant_alpha(g.series.slice(0, 20), 0.0)
    state.climate = Climate.from_series(g.series.slice(0, 20))
    with pytest.raises(ValueError, match="outside"):
        score_recovery(state, g.truth)
