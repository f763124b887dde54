"""Time the hot kernels with numba and with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--t1 50] [--repeat 3]

The JIT switch is read at import time, so each variant runs in its own
interpreter with HARVEST_SA_JIT set accordingly.
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _measure(t1: float, repeat: int) -> dict:
    from harvest_sa._jit import JIT_ENABLED
    from harvest_sa.analysis import simulate_power
    from harvest_sa.integrator import IntegratorSettings, integrate
    from harvest_sa.model import HarvesterParams, State3, rhs

    prm = HarvesterParams(f=0.147, beta=1.0)
    settings = IntegratorSettings(t1=t1, n_out=int(t1 * 100) + 1)
    integrate(prm, State3(), IntegratorSettings(t1=1.0, n_out=11))  # compile / warm up

    def best(fn):
        times = []
        for _ in range(repeat):
            t = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t)
        return min(times)

    state = np.array([1.0, 0.0, 0.0])
    return {
        "jit": JIT_ENABLED,
        "rhs_10k": best(lambda: [rhs(state, 0.1, prm) for _ in range(10_000)]),
        "integrate": best(lambda: integrate(prm, State3(), settings)),
        "simulate_power": best(lambda: simulate_power(prm.to_array(), state, settings)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--t1", type=float, default=50.0, help="integration horizon")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)
    if args.child:
        print(json.dumps(_measure(args.t1, args.repeat)))
        return
    results = {}
    for flag in ("1", "0"):
        env = dict(os.environ, HARVEST_SA_JIT=flag)
        out = subprocess.run([sys.executable, __file__, "--child", "--t1", str(args.t1),
                              "--repeat", str(args.repeat)],
                             env=env, capture_output=True, text=True, check=True)
        results[flag] = json.loads(out.stdout.strip().splitlines()[-1])
    print(f"horizon t1={args.t1:g}, best of {args.repeat}")
    print(f"{'kernel':<16}{'numba [s]':>12}{'python [s]':>12}{'speed-up':>10}")
    for key in ("rhs_10k", "integrate", "simulate_power"):
        fast, slow = results["1"][key], results["0"][key]
        print(f"{key:<16}{fast:>12.4f}{slow:>12.4f}{slow / fast:>9.1f}x")


if __name__ == "__main__":
    main()
