"""Time the compiled and pure-numpy kernels on the 7-agent scenario.

    python3 benchmarks/bench_kernels.py [--steps 2000]
"""

import argparse
import time

import numpy as np

from so3sync import kernels
from so3sync.config import bundled
from so3sync.engine import jump_event


def _per_call(fn, reps):
    fn()  # compile / warm caches
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t0) / reps


def bench(controller, steps):
    cfg = bundled("paper_fig3_hybrid").with_overrides(controller=controller)
    rows = []
    for name in kernels.BACKENDS:
        loop = cfg.build_loop(name)
        s = cfg.build_state(loop.tree)
        if controller != "continuous":
            s, _ = jump_event(s, loop)
        k, p = loop.kernel, loop.params
        args = loop._args(s)
        sets = (np.array(p.xi_set), np.array(loop.pi_set), p.delta, loop.delta_q)

        def flow():
            a = tuple(x.copy() if isinstance(x, np.ndarray) else x for x in args)
            k.flow(*a, *sets, 1e-3, steps, 1e-6)

        rows.append((name,
                     _per_call(lambda: k.vector_field(*args), 200),
                     _per_call(lambda: k.rk4_step(*args, 1e-3), 100),
                     _per_call(flow, 3) / steps))
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=2000)
    args = ap.parse_args()
    print("%-14s %-6s %12s %12s %14s" % ("controller", "kernel", "field [us]", "rk4 [us]",
                                         "flow/step [us]"))
    for c in ("continuous", "hybrid", "velocity-free"):
        rows = bench(c, args.steps)
        for name, vf, rk, fl in rows:
            print("%-14s %-6s %12.1f %12.1f %14.1f" % (c, name, vf * 1e6, rk * 1e6, fl * 1e6))
        print("%-14s speedup on flow: %.1fx" % ("", rows[1][3] / rows[0][3]))


if __name__ == "__main__":
    main()
