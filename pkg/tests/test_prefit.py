import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import least_squares

from pcmnn.dynamics import LogisticParams, logistic_closed_form
from pcmnn.ingest import CompositeSeries
from pcmnn.prefit import (IllConditionedWarning, fit_arrays, fit_logistic, levenberg_marquardt, logistic_jacobian,
                          start_grid, write_fit_curve, write_result_csv)


TRUE = LogisticParams(0.372, 0.0008)


def _series(y):
    n = len(y)
    return CompositeSeries(np.arange(n), np.asarray(y, float), np.full(n, 21.0), np.full(n, 84.0), 1)


def _noiseless(n=30, x0=2.0):
    return logistic_closed_form(TRUE, x0, np.arange(n, dtype=float))


def test_noiseless_recovery():
    res = fit_logistic(_series(_noiseless()), (0, 21))
    assert res.A_hat == pytest.approx(0.372, rel=0.01)
    assert res.B_hat == pytest.approx(0.0008, rel=0.05)
    assert res.x0_hat == pytest.approx(2.0, rel=1e-3)
    assert res.converged and not res.ill_conditioned


def test_fixed_x0_recovery():
    res = fit_logistic(_series(_noiseless()), fix_x0=True)
    assert res.x0_hat == 2.0
    assert res.A_hat == pytest.approx(0.372, rel=1e-6)


def test_jacobian_matches_finite_differences():
    t = np.linspace(0, 21, 22)
    theta = np.array([0.35, 0.0009, 2.5])
    J = logistic_jacobian(*theta, t)
    model = lambda th: logistic_closed_form(LogisticParams(th[0], th[1]), th[2], t)  # noqa: E731
    for k in range(3):
        h = 1e-5 * theta[k]  # step relative to each parameter's own scale
        up, dn = theta.copy(), theta.copy()
        up[k] += h
        dn[k] -= h
        fd = (model(up) - model(dn)) / (2 * h)
        assert np.allclose(J[:, k], fd, rtol=1e-6, atol=1e-9 * np.abs(fd).max())


def _scipy_fit(t, y, x0_guess):
    def resid(th):
        return logistic_closed_form(LogisticParams(th[0], th[1]), th[2], t) - y
    best = None
    for s in start_grid(y):
        r = least_squares(resid, s, bounds=([1e-8, 1e-10, 1e-8], [np.inf, np.inf, np.inf]),
                          xtol=1e-14, ftol=1e-14, gtol=1e-14, x_scale="jac")
        if best is None or r.cost < best.cost:
            best = r
    return best.x, 2 * best.cost


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_agrees_with_scipy_on_noisy_data(seed):
    rng = np.random.default_rng(seed)
    t = np.arange(22.0)
    y = logistic_closed_form(TRUE, 2.0, t) + rng.normal(0, 3.0, size=t.size)
    y = np.maximum(y, 0.0)
    ours = fit_arrays(t, y)
    theta, sse = _scipy_fit(t, y, y[0])
    assert ours.sse <= sse * (1 + 1e-6)
    assert ours.A_hat == pytest.approx(theta[0], rel=1e-3)
    assert ours.B_hat == pytest.approx(theta[1], rel=1e-3)


def test_constant_data_is_flagged():
    with pytest.warns(IllConditionedWarning):
        res = fit_arrays(np.arange(22.0), np.full(22, 50.0))
    assert res.ill_conditioned
    assert res.K_hat == pytest.approx(50.0, rel=1e-3)


def test_seeds_give_the_same_best_sse():
    y = _noiseless(22) * (1 + 0.02 * np.sin(np.arange(22)))
    a = fit_arrays(np.arange(22.0), y, seed=1)
    b = fit_arrays(np.arange(22.0), y, seed=99)
    assert abs(a.sse - b.sse) <= 1e-8 * max(1.0, a.sse)


def test_sse_not_above_any_start():
    rng = np.random.default_rng(5)
    y = np.maximum(_noiseless(22) + rng.normal(0, 5, 22), 0)
    res = fit_arrays(np.arange(22.0), y)
    assert all(res.sse <= s for s in res.start_sse)


@settings(max_examples=25)
@given(st.floats(0.2, 0.6), st.floats(200, 800), st.floats(1.0, 10.0))
def test_exact_data_is_a_fixed_point(A, K, x0):
    # starting at the truth, LM must not move away from a zero-residual fit
    t = np.arange(22.0)
    y = logistic_closed_form(LogisticParams(A, A / K), x0, t)
    theta, sse, _, conv = levenberg_marquardt(t, y, (A, A / K, x0))
    assert conv and sse < 1e-12 * float(y @ y)
    assert theta[0] == pytest.approx(A, rel=1e-8)


@settings(max_examples=20)
@given(st.integers(1, 8))
def test_time_shift_changes_only_x0(shift):
    # fitting days shift..shift+21 re-bases time; A and B are unchanged
    y = _noiseless(40)
    res = fit_logistic(_series(y), (shift, shift + 21))
    assert res.A_hat == pytest.approx(0.372, rel=1e-6)
    assert res.x0_hat == pytest.approx(y[shift], rel=1e-6)


def test_input_validation():
    with pytest.raises(ValueError):
        fit_arrays(np.arange(3.0), np.ones(3))
    with pytest.raises(ValueError):
        fit_logistic(_series(_noiseless()), (0, 40))


def test_output_files(tmp_path):
    s = _series(_noiseless())
    res = fit_logistic(s)
    write_result_csv(res, tmp_path / "r.csv")
    write_fit_curve(res, s, tmp_path / "c.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "A,B,K,x0,sse,iterations,converged,day_start,day_end"
    curve = np.loadtxt(tmp_path / "c.csv", delimiter=",", skiprows=1)
    assert curve.shape == (30, 3)
    assert np.allclose(curve[:, 2], curve[:, 1], rtol=1e-6)
    assert "A = " in res.as_kv()
