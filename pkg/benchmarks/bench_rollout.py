"""Time batched rollouts on the compiled and the numpy kernels.

    python3 benchmarks/bench_rollout.py [--batch 256] [--repeats 5]

Prints rollouts/second per environment and backend, and checks that both
backends agree on the states they produce.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from simcal.simenv import CATALOG, exciter_actions, get_spec
from simcal.simenv.backend import compiled_kernel, python_kernel


def _inputs(env_id: str, batch: int, seed: int = 0):
    spec = get_spec(env_id)
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0, 1, size=(batch, spec.dim))
    params = np.ascontiguousarray(spec.space.low + theta * (spec.space.high - spec.space.low))
    starts = np.ascontiguousarray(rng.uniform(spec.start_low, spec.start_high, size=(batch, spec.state_dim)))
    ff = np.ascontiguousarray(np.repeat(exciter_actions(env_id)[None], batch, axis=0))
    gains = np.ascontiguousarray(0.1 * rng.standard_normal((batch, spec.action_dim, spec.state_dim)))
    lo, hi = spec.action_bounds
    return spec, (params, starts, ff, gains, lo, hi, spec.dt)


def time_kernel(kernel, spec, args, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        kernel.rollout(spec.dynamics_code, *args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=256)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--envs", nargs="*", default=list(CATALOG))
    args = ap.parse_args(argv)
    if compiled_kernel is None:
        print("compiled kernel not built; only the numpy kernel is timed")
    print(f"{'env':26s} {'python r/s':>12s} {'cython r/s':>12s} {'speedup':>8s} {'max |diff|':>11s}")
    for env_id in args.envs:
        spec, kargs = _inputs(env_id, args.batch)
        t_py = time_kernel(python_kernel, spec, kargs, args.repeats)
        line = f"{env_id:26s} {args.batch / t_py:12.0f}"
        if compiled_kernel is not None:
            t_c = time_kernel(compiled_kernel, spec, kargs, args.repeats)
            s_py, _ = python_kernel.rollout(spec.dynamics_code, *kargs)
            s_c, _ = compiled_kernel.rollout(spec.dynamics_code, *kargs)
            diff = float(np.nanmax(np.abs(s_py - s_c)))
            line += f" {args.batch / t_c:12.0f} {t_py / t_c:8.1f} {diff:11.2e}"
        print(line)


if __name__ == "__main__":
    main()
