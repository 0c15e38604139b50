"""Time Gram matrices and their adjoints on both backends.

    python3 benchmarks/bench_sigkernel.py [--batch 8] [--length 61] [--order 5]

Each backend runs in its own interpreter because the choice is fixed at
import time. Numba timings exclude the first (compiling) call.
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = """
import json, sys, time
import numpy as np
from sigmmd import _backend
from sigmmd.sigkernel import SigKernelConfig, StaticKernelConfig, gram_array, gram_vjp

B, L, m, reps = map(int, sys.argv[1:5])
rng = np.random.default_rng(0)
X = np.cumsum(rng.normal(size=(B, L, 2)) * 0.05, axis=1)
Y = np.cumsum(rng.normal(size=(B, L, 2)) * 0.05, axis=1)
W = np.ones((B, B))
cfg = SigKernelConfig(StaticKernelConfig("rational_quadratic", 1.0, 0.1), m)
gram_array(X[:2, :4], Y[:2, :4], cfg)
gram_vjp(X[:2, :4], Y[:2, :4], W[:2, :2], cfg)

def best(fn):
    times = []
    for _ in range(reps):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)

fwd = best(lambda: gram_array(X, Y, cfg))
bwd = best(lambda: gram_vjp(X, Y, W, cfg))
print(json.dumps({"backend": _backend.backend(), "forward_s": fwd, "vjp_s": bwd, "pairs": B * B}))
"""


def run(backend, args):
    env = dict(os.environ, SIGMMD_BACKEND=backend)
    cmd = [sys.executable, "-c", WORKER, str(args.batch), str(args.length), str(args.order), str(args.reps)]
    out = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=8)
    ap.add_argument("--length", type=int, default=61)
    ap.add_argument("--order", type=int, default=5)
    ap.add_argument("--reps", type=int, default=3)
    args = ap.parse_args()
    rows = [run(b, args) for b in ("numba", "numpy")]
    print(f"B={args.batch} L={args.length} m={args.order} ({args.batch ** 2} pairs)")
    print(f"{'backend':8} {'forward ms/pair':>16} {'vjp ms/pair':>12}")
    for r in rows:
        print(f"{r['backend']:8} {1e3 * r['forward_s'] / r['pairs']:16.3f} {1e3 * r['vjp_s'] / r['pairs']:12.3f}")
    nb, npy = rows
    print(f"speed-up: forward {npy['forward_s'] / nb['forward_s']:.1f}x, vjp {npy['vjp_s'] / nb['vjp_s']:.1f}x")


if __name__ == "__main__":
    main()
