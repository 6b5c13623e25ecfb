import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pcmnn.autodiff import (MlpNetwork, OutputMap, Tape, apply, forward, grad_input, grad_params, init_network,
                            load_network, network_from_dict, network_to_dict, param_leaves, save_network)

from conftest import central_diff, rel_err


def _net(sizes, theta, output_map=None):
    return MlpNetwork(sizes, np.asarray(theta, dtype=float), output_map or OutputMap())


def test_zero_network_outputs_zero():
    net = _net((3, 4, 1), np.zeros(21))
    assert forward(net, [0.3, -2.0, 5.0]).value == 0.0
    assert net(np.ones(3)) == 0.0


def test_single_affine_layer():
    net = _net((1, 1), [2.0, 1.0])
    assert forward(net, [3.0]).value == pytest.approx(7.0)


def test_two_layer_hand_evaluation():
    # W1 = [[0.5, -1], [2, 0.25]], b1 = [0.1, -0.2], W2 = [[1.5, -0.7]], b2 = [0.3]
    theta = [0.5, -1.0, 2.0, 0.25, 0.1, -0.2, 1.5, -0.7, 0.3]
    net = _net((2, 2, 1), theta)
    x = (0.4, -1.2)
    h1 = math.tanh(0.5 * 0.4 - 1.0 * -1.2 + 0.1)
    h2 = math.tanh(2.0 * 0.4 + 0.25 * -1.2 - 0.2)
    expected = 1.5 * h1 - 0.7 * h2 + 0.3
    assert forward(net, x).value == pytest.approx(expected, rel=1e-14)
    assert net(np.array(x)) == pytest.approx(expected, rel=1e-14)


def test_dimension_mismatch():
    net = _net((2, 1), [1.0, 1.0, 0.0])
    with pytest.raises(ValueError):
        forward(net, [1.0, 2.0, 3.0])


def test_linear_gradients():
    w = np.array([0.7, -1.3, 2.0])
    net = _net((3, 1), np.concatenate([w, [0.0]]))
    x = np.array([1.5, 0.2, -0.4])
    assert np.allclose(grad_params(forward(net, x))[:3], x)
    for i in range(3):
        assert grad_input(forward(net, x), i) == pytest.approx(w[i])


def test_tanh_gradient_at_origin():
    # y = tanh(w x) with w = 0: dy/dw = x
    net = _net((1, 1, 1), [0.0, 0.0, 1.0, 0.0])
    g = grad_params(forward(net, [1.7]))
    assert g[0] == pytest.approx(1.7)


def test_constant_network_has_zero_input_gradient():
    net = _net((2, 3, 1), np.r_[np.zeros(9), np.ones(4)])
    assert grad_input(forward(net, [0.2, 0.9]), 1) == 0.0


def test_grad_input_index_checked():
    net = _net((2, 1), [1.0, 1.0, 0.0])
    with pytest.raises(IndexError):
        grad_input(forward(net, [1.0, 2.0]), 2)


def test_only_tanh_activation():
    with pytest.raises(ValueError):
        MlpNetwork((1, 1), np.zeros(2), activation="relu")


@pytest.mark.parametrize("seed", range(5))
def test_random_three_layer_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    net = init_network((3, 6, 5, 1), rng)
    net.theta[...] = rng.normal(scale=0.8, size=net.n_params)
    x = rng.normal(size=3)

    def f_theta(th):
        return float(_net(net.layer_sizes, th)(x))

    assert rel_err(grad_params(forward(net, x)), central_diff(f_theta, net.theta)) < 1e-5
    fd_x = central_diff(lambda z: float(net(z)), x)
    for i in range(3):
        assert grad_input(forward(net, x), i) == pytest.approx(fd_x[i], rel=1e-5, abs=1e-9)


def test_bounded_output_midpoint_and_saturation():
    bounds = OutputMap.bounded(-1.372, 0.628)
    zero = _net((3, 1), np.zeros(4), bounds)
    assert zero(np.array([5.0, -2.0, 0.1])) == pytest.approx(-0.372, abs=1e-15)
    hot = _net((3, 1), [0.0, 0.0, 0.0, 60.0], bounds)
    assert hot(np.zeros(3)) == pytest.approx(0.628, abs=1e-12)
    cold = _net((3, 1), [0.0, 0.0, 0.0, -800.0], bounds)
    assert cold(np.zeros(3)) == pytest.approx(-1.372, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_bounded_output_stays_in_range(seed):
    rng = np.random.default_rng(seed)
    net = init_network((3, 8, 1), rng, OutputMap.bounded(-1.372, 0.628))
    net.theta[...] = rng.normal(scale=20.0, size=net.n_params)
    y = net(rng.normal(scale=50.0, size=(64, 3)))
    assert np.all((y >= -1.372) & (y <= 0.628))


def test_glorot_initialisation_limits(rng):
    net = init_network((4, 10, 1), rng)
    assert np.all(np.abs(net.weights[0]) <= math.sqrt(6 / 14))
    assert np.all(net.biases[0] == 0) and np.all(net.biases[1] == 0)


@pytest.mark.parametrize("omap", [OutputMap(scale=37.0), OutputMap.bounded(-1.372, 0.628)])
def test_fused_route_matches_composed_route(omap, rng):
    net = init_network((2, 7, 7, 1), rng, omap)
    net.theta[...] = rng.normal(scale=0.7, size=net.n_params)
    X = rng.normal(size=(5, 2))
    tape = Tape()
    th = param_leaves(tape, net)
    y, _ = apply(tape, net, X, th)
    tape.backward(y.sum())
    rec = forward(net, X)
    assert np.allclose(y.value, rec.value, rtol=1e-13, atol=1e-14)
    rec.tape.backward(rec.output.sum())
    flat = np.concatenate([p.grad.ravel() for p in rec.params])
    assert np.allclose(th.grad, flat, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("omap", [OutputMap(scale=5.0), OutputMap.bounded(-1.0, 2.0)])
def test_tangent_derivative_and_its_parameter_gradient(omap, rng):
    net = init_network((2, 6, 6, 1), rng, omap)
    net.theta[...] = rng.normal(scale=0.7, size=net.n_params)
    X = rng.normal(size=(4, 2))

    def dy_numeric(theta, h=1e-5):
        n2 = _net(net.layer_sizes, theta, omap)
        Xp, Xm = X.copy(), X.copy()
        Xp[:, 1] += h
        Xm[:, 1] -= h
        return (n2(Xp) - n2(Xm)) / (2 * h)

    tape = Tape()
    th = param_leaves(tape, net)
    y, dy = apply(tape, net, X, th, tangent_col=1)
    assert np.allclose(dy.value, dy_numeric(net.theta), rtol=1e-7, atol=1e-9)

    # d/dtheta of sum(dy^2): the tangent stays differentiable
    tape.backward(dy.square().sum())

    def loss(theta):
        n2 = _net(net.layer_sizes, theta, omap)
        t2 = Tape()
        _, d2 = apply(t2, n2, X, param_leaves(t2, n2), tangent_col=1)
        return float(np.sum(d2.value ** 2))

    assert rel_err(th.grad, central_diff(loss, net.theta)) < 1e-5


def test_checkpoint_round_trip_is_bit_exact(tmp_path, rng):
    net = init_network((3, 5, 4, 1), rng, OutputMap.bounded(-1.372, 0.628))
    net.theta[...] = rng.normal(size=net.n_params) * np.pi
    path = tmp_path / "net.json"
    save_network(net, path)
    back = load_network(path)
    assert back.layer_sizes == net.layer_sizes
    assert np.array_equal(back.theta, net.theta)
    assert back.output_map == net.output_map
    X = rng.normal(size=(8, 3))
    assert np.array_equal(back(X), net(X))
    assert json.loads(path.read_text())["format"] == "pcmnn-mlp"


def test_checkpoint_rejects_wrong_format():
    d = network_to_dict(_net((1, 1), [1.0, 0.0]))
    d["format"] = "other"
    with pytest.raises(ValueError):
        network_from_dict(d)


def test_forward_is_deterministic(rng):
    net = init_network((3, 8, 8, 1), rng)
    X = rng.normal(size=(50, 3))
    assert np.array_equal(net(X), net(X))
