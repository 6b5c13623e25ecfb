"""Small builders shared by several test modules."""

import numpy as np
from scipy.special import logit

from pcmnn.dynamics import LogisticParams
from pcmnn.ingest import CompositeSeries
from pcmnn.pinn import TrainConfig, build_problem, init_state

TINY = dict(state_hidden=(6, 6), alpha_hidden=(5,), n_colloc=16)


def series_of(y, T=21.0, H=84.0):
    n = len(y)
    return CompositeSeries(np.arange(n), np.asarray(y, float), np.full(n, float(T)), np.full(n, float(H)), 1)


def state_with_constant_alpha(series, value=0.0, params=None):
    """An untrained state whose alpha network outputs exactly ``value`` everywhere."""
    params = params or LogisticParams()
    state = init_state(build_problem(series, params), TrainConfig(iterations=1, **TINY))
    span = params.alpha_max - params.alpha_min
    state.alpha_net.theta[...] = 0.0
    state.alpha_net.theta[-1] = logit((value - params.alpha_min) / span)
    return state
