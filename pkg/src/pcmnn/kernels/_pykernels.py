"""Pure-Python/numpy reference kernels.

The compiled module ``_ckernels`` exposes the same three functions with the
same signatures and return values; ``pcmnn.kernels`` picks one at import.
"""

from __future__ import annotations

import math

import numpy as np

NAME = "python"


def mlp_forward(weights, biases, X, tangent_col=-1):
    """Forward pass of a tanh MLP with a linear last layer.

    With ``tangent_col >= 0`` the directional derivative of every layer with
    respect to input column ``tangent_col`` is propagated alongside (forward
    mode). Returns ``(y, dy, cache)``; ``dy`` is None without a tangent.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    n_layers = len(weights)
    acts = [X]
    dacts = [None]
    dzs = [None]
    a = X
    dz = None
    da = None
    for layer in range(n_layers):
        W = weights[layer]
        z = a @ W.T + biases[layer]
        if tangent_col >= 0:
            if layer == 0:
                # d(X W^T)/dX[:, k] is the k-th weight column for every row
                dz = np.broadcast_to(W[:, tangent_col], z.shape).copy()
            else:
                dz = da @ W.T
        if layer < n_layers - 1:
            a = np.tanh(z)
            acts.append(a)
            if tangent_col >= 0:
                da = (1.0 - a * a) * dz
                dacts.append(da)
                dzs.append(dz)
            else:
                dacts.append(None)
                dzs.append(None)
    cache = (acts, dacts, dzs, tangent_col)
    return z, dz, cache


def mlp_backward(weights, cache, gy, gdy=None):
    """Vector-Jacobian product of :func:`mlp_forward`.

    ``gy`` and ``gdy`` are cotangents of ``y`` and ``dy``. Returns
    ``(grad_weights, grad_biases, grad_input)``.
    """
    acts, dacts, dzs, tangent_col = cache
    n_layers = len(weights)
    gW = [None] * n_layers
    gb = [None] * n_layers
    gz = np.asarray(gy, dtype=np.float64)
    gdz = None if (gdy is None or tangent_col < 0) else np.asarray(gdy, dtype=np.float64)
    gX = None
    for layer in range(n_layers - 1, -1, -1):
        W = weights[layer]
        a_prev = acts[layer]
        gw = gz.T @ a_prev
        if gdz is not None:
            if layer == 0:
                # tangent of the input is the constant unit vector e_k
                gw[:, tangent_col] += gdz.sum(axis=0)
            else:
                gw += gdz.T @ dacts[layer]
        gW[layer] = gw
        gb[layer] = gz.sum(axis=0)
        ga = gz @ W
        if layer == 0:
            gX = ga
            break
        s = 1.0 - a_prev * a_prev
        if gdz is not None:
            gda = gdz @ W
            gs = gda * dzs[layer]
            gz = s * (ga - 2.0 * a_prev * gs)
            gdz = gda * s
        else:
            gz = ga * s
    return gW, gb, gX


def rk4_tabulated(A, B, x0, hs, alpha):
    """Classical RK4 for dx/dt = (A + alpha) x - B x^2 with tabulated alpha.

    ``alpha[i]`` holds the modulation at the start, midpoint and end of step
    ``i``. Negative states are clipped to zero and counted. Returns
    ``(xs, n_clipped, blowup_step)`` with ``blowup_step = -1`` when every
    state stayed finite; on blow-up ``xs`` is filled only up to that step.
    """
    hs = [float(h) for h in hs]
    tab = np.asarray(alpha, dtype=np.float64).tolist()
    n = len(hs)
    xs = np.zeros(n + 1)
    x = float(x0)
    xs[0] = x
    clipped = 0
    for i in range(n):
        h = hs[i]
        a0, a1, a2 = tab[i]
        r0 = A + a0
        r1 = A + a1
        k1 = r0 * x - B * x * x
        xm = x + 0.5 * h * k1
        k2 = r1 * xm - B * xm * xm
        xm = x + 0.5 * h * k2
        k3 = r1 * xm - B * xm * xm
        xe = x + h * k3
        k4 = (A + a2) * xe - B * xe * xe
        x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not math.isfinite(x):
            return xs, clipped, i
        if x < 0.0:
            x = 0.0
            clipped += 1
        xs[i + 1] = x
    return xs, clipped, -1
