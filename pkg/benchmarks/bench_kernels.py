"""Timing comparison of the integrator kernels: compiled extension vs the
pure-python fallback.

Runs batches of RK4 steps through each backend on the same packed state and
reports steps/second plus the speedup. Invoke from the repo root:

    python3 benchmarks/bench_kernels.py [--steps 20000] [--repeats 5]
"""

import argparse
import math
import time

import numpy as np

from flipthrow import _kernel_py
from flipthrow.dynamics import ControlInput, Params, pack_state
from flipthrow.sim import _initial_state
from flipthrow.simconfig import SimConfig

try:
    from flipthrow import _core
except ImportError:
    _core = None


def _case():
    s = _initial_state(SimConfig(), (0.0, 0.0, 0.0))
    params = Params()
    x = pack_state(s)
    # hover thrust with a small moment so the rollout exercises every term
    u = np.array([params.total_mass * params.gravity, 0.003, 0.001, -0.002])
    return x, u, params.packed()


def _time_backend(kernel, x, u, par, dt, steps, repeats):
    best = math.inf
    out = None
    for _ in range(repeats):
        xi = x.copy()
        t0 = time.perf_counter()
        out = kernel.step_n(xi, u, par, dt, steps)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20000, help="RK4 steps per batch")
    ap.add_argument("--repeats", type=int, default=5, help="batches per backend (best kept)")
    ap.add_argument("--dt", type=float, default=1e-3, help="integrator step")
    args = ap.parse_args()

    x, u, par = _case()

    t_py, out_py = _time_backend(_kernel_py, x, u, par, args.dt, args.steps, args.repeats)
    rate_py = args.steps / t_py
    print(f"python   : {t_py * 1e3:8.1f} ms for {args.steps} steps  ({rate_py:,.0f} steps/s)")

    if _core is None:
        print("compiled : unavailable (install built the fallback only)")
        return

    t_c, out_c = _time_backend(_core, x, u, par, args.dt, args.steps, args.repeats)
    rate_c = args.steps / t_c
    print(f"compiled : {t_c * 1e3:8.1f} ms for {args.steps} steps  ({rate_c:,.0f} steps/s)")
    print(f"speedup  : {t_py / t_c:.1f}x")

    gap = float(np.max(np.abs(out_py - out_c)))
    print(f"final-state agreement: max |diff| = {gap:.3e}")


if __name__ == "__main__":
    main()
