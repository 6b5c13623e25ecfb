"""Compare the compiled and pure-Python kernels.

    python benchmarks/bench_kernels.py [--repeat 5]

Times one full training step (joint loss + gradient on the default networks,
100 collocation points), the state-network forward/backward with the time
tangent, and a 30-day RK4 integration at h = 0.01. Prints a table of the best
of ``--repeat`` runs.
"""

import argparse
import timeit

import numpy as np

from pcmnn import kernels
from pcmnn.dynamics import Climate, LogisticParams, SinusoidalAlpha, integrate_rk4
from pcmnn.pinn import TrainConfig, build_problem, evaluate_loss, init_state, sample_collocation
from pcmnn.synth import benchmark_scenario, generate


def cases():
    g = generate(benchmark_scenario())
    cfg = TrainConfig()
    problem = build_problem(g.series, LogisticParams())
    state = init_state(problem, cfg)
    t_c = sample_collocation(cfg, np.random.default_rng(0))
    net = state.state_net
    X = t_c.reshape(-1, 1)
    gy = np.ones((X.shape[0], 1))
    clim = Climate.constant(21, 84)
    days = np.arange(30.0)

    def mlp():
        _, _, cache = kernels.mlp_forward(net.weights, net.biases, X, 0)
        kernels.mlp_backward(net.weights, cache, gy, gy)

    return {
        "training step": lambda: evaluate_loss(state, problem, t_c),
        "state net fwd+bwd": mlp,
        "rk4 30 days": lambda: integrate_rk4(LogisticParams(), SinusoidalAlpha(), 2.0, clim, days),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    names = list(kernels.available_backends())
    results = {}
    for backend in names:
        kernels.set_backend(backend)
        for case, fn in cases().items():
            n = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
            best = min(timeit.repeat(fn, number=n, repeat=args.repeat)) / n
            results[(case, backend)] = best
    print(f"{'case':<20}" + "".join(f"{b + ' (ms)':>16}" for b in names) + ("   speedup" if len(names) > 1 else ""))
    for case in cases():
        row = f"{case:<20}" + "".join(f"{results[(case, b)] * 1e3:>16.3f}" for b in names)
        if "cython" in names:
            row += f"{results[(case, 'python')] / results[(case, 'cython')]:>9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
