"""Time the hot kernels with numba and with the plain-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 3] [--scale 1.0]

The script re-runs itself with ``NAKASIM_DISABLE_JIT=1`` for the Python
column, so both columns execute exactly the same code paths. The JIT column
excludes compilation (one warm-up call per kernel).
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _workloads(scale: float):
    from nakasim import kernels
    from nakasim.arrivals import BlockTypeSpec, Origin, generate_typed_trace, merge_traces
    from nakasim.blocktree import build_fully_delayed_chain

    specs = [BlockTypeSpec(0, 1.0, 1.0, 0.3)]
    horizon = 2000.0 * scale
    h = generate_typed_trace(specs, Origin.HONEST, 10, horizon, 1)
    a = generate_typed_trace(specs, Origin.ADVERSARY, 10, horizon, 1)
    inc = h.scores(specs)
    chain = build_fully_delayed_chain(h, 0.5, specs)
    a_cum = np.cumsum(a.scores(specs))
    centers = np.linspace(5.0, horizon / 4, 200)
    targets = np.ascontiguousarray(h.times[(h.times > 100) & (h.times < 110)])
    m = merge_traces(h, a)
    honest_mask = m.origins == Origin.HONEST
    m_scores = m.scores(specs)

    return {
        "fd_chain": lambda: kernels.fd_chain(h.times, inc, 0.5),
        "interval_events_many": lambda: kernels.interval_events_many(
            chain.times, chain.scores, chain.running_max, a.times, a_cum, 0.5, centers, 0.5, horizon),
        "overtake_extent": lambda: kernels.overtake_extent(
            chain.times, chain.scores, chain.running_max, a.times, a_cum, 0.5, targets, horizon),
        "race(private-mining)": lambda: kernels.race(m.times, honest_mask, m.miner_ids, m_scores, 10, 0.5, 2,
                                                      np.inf),
    }


def _measure(repeat: int, scale: float) -> dict:
    from nakasim._jit import backend

    out = {"backend": backend(), "times": {}}
    for name, fn in _workloads(scale).items():
        fn()  # warm-up, and compilation on the JIT side
        best = float("inf")
        for _ in range(repeat):
            t = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t)
        out["times"][name] = best
    return out


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--scale", type=float, default=1.0, help="multiplies the simulated horizon")
    p.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = p.parse_args(argv)
    if args.worker:
        print(json.dumps(_measure(args.repeat, args.scale)))
        return 0

    cmd = [sys.executable, __file__, "--worker", "--repeat", str(args.repeat), "--scale", str(args.scale)]
    results = {}
    for flag in ("0", "1"):
        env = dict(os.environ, NAKASIM_DISABLE_JIT=flag)
        proc = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
        res = json.loads(proc.stdout.strip().splitlines()[-1])
        results[res["backend"]] = res["times"]
    jit, py = results["numba"], results["python"]
    print(f"{'kernel':<24}{'numba (s)':>12}{'python (s)':>12}{'speedup':>10}")
    for name in jit:
        print(f"{name:<24}{jit[name]:>12.5f}{py[name]:>12.5f}{py[name] / jit[name]:>9.0f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
