"""Time the numba and numpy kernel flavours side by side.

Workload: 20 demonstrations of 1000 steps, 100 masks over a 20x100 snippet
grid, 20 evaluation rollouts per retrained model. Both flavours are called
directly from ``kernels.IMPLS`` so one process times both.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from ilmask import kernels
from ilmask.core import GridGeometry, derive
from ilmask.envs import expert_policy, make_env
from ilmask.masking import gen_masks

H, T, G, N_MASKS, J = 20, 1000, 100, 100, 20


def workload():
    env = make_env("keydoor", {"size": 12, "key": [2, 9], "door": [11, 11], "start": "random"},
                   horizon=T)
    pol = expert_policy(env)
    # a noisy expert so episodes do not all end in the first few dozen steps
    probs = 0.7 * pol.probs + 0.3 / env.n_actions
    cum = np.cumsum(probs, axis=1)
    rng = np.random.default_rng(0)
    u_start, u_act = rng.random(J), rng.random((J, T))
    masks = gen_masks(GridGeometry(H, T, G), 50, N_MASKS, derive(0, 1))
    stacked = np.stack([m.cells.ravel() for m in masks])
    returns = rng.normal(size=N_MASKS)
    return {
        "rollout_batch": (env.next_state, env.reward, env.terminal, cum, env.start_cum,
                          env.noop, u_start, u_act),
        "value_iteration": (env.next_state, env.reward, env.n_states + 1),
        "soft_value_iteration": (env.next_state, env.reward, env.terminal, env.noop,
                                 0.95, 0.1, 2000, 1e-9),
        "softmax_gd": (rng.integers(0, 5, (env.n_states, env.n_actions)).astype(float),
                       rng.normal(0, 0.01, (env.n_states, env.n_actions)), 50.0, 200),
        "accumulate": (stacked, returns),
    }


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    work = workload()
    print(f"{'kernel':<22}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, (nb, np_) in kernels.IMPLS.items():
        nb(*work[name])  # compile outside the timed region
        t_nb = best_of(nb, work[name], args.repeat)
        t_np = best_of(np_, work[name], args.repeat)
        print(f"{name:<22}{t_nb * 1e3:>12.3f}{t_np * 1e3:>12.3f}{t_np / t_nb:>10.1f}x")


if __name__ == "__main__":
    main()
