"""Compare the numba and numpy convolution backends.

Runs the three hot kernels (forward conv, input gradient, weight gradient)
on generator-sized workloads with both backends in subprocesses (the backend
is chosen at import time via LSDIP_NO_NUMBA) and prints a timing table.

Usage: python3 bench/benchmark_kernels.py [--repeats N]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, os, sys, time
import numpy as np
from lsdip.kernels import (active_backend, conv3d, conv3d_grad_input,
                           conv3d_grad_weights)

repeats = int(sys.argv[1])
rng = np.random.default_rng(0)
cases = [
    ("latent 8 -> 8, 64x64x8", 8, 8, 8, 64, 64),
    ("hidden 8 -> 8, 64x64x8", 8, 8, 8, 64, 64),
    ("head   8 -> 2, 64x64x8", 8, 2, 8, 64, 64),
    ("small  4 -> 4, 32x32x4", 4, 4, 4, 32, 32),
]
results = {"backend": active_backend(), "cases": []}
for name, ci, co, t, h, w in cases:
    x = rng.standard_normal((ci, t, h, w))
    wt = rng.standard_normal((co, ci, 3, 3, 3))
    b = rng.standard_normal(co)
    g = rng.standard_normal((co, t, h, w))
    for fn, label in ((lambda: conv3d(x, wt, b), "conv"),
                      (lambda: conv3d_grad_input(g, wt), "grad_in"),
                      (lambda: conv3d_grad_weights(x, g), "grad_w")):
        fn()  # warm up (JIT compile on the numba path)
        t0 = time.perf_counter()
        for _ in range(repeats):
            fn()
        dt = (time.perf_counter() - t0) / repeats
        flops = 2.0 * ci * co * 27 * t * h * w
        results["cases"].append({"case": name, "kernel": label,
                                 "ms": dt * 1e3, "gflops": flops / dt / 1e9})
print(json.dumps(results))
"""


def run_backend(no_numba: bool, repeats: int) -> dict:
    env = dict(os.environ)
    env["LSDIP_NO_NUMBA"] = "1" if no_numba else ""
    out = subprocess.run([sys.executable, "-c", WORKER, str(repeats)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    fast = run_backend(no_numba=False, repeats=args.repeats)
    slow = run_backend(no_numba=True, repeats=args.repeats)
    print(f"backends: {fast['backend']} vs {slow['backend']}")
    if fast["backend"] == slow["backend"]:
        print("warning: numba unavailable, comparing numpy against itself")
    print(f"{'case':26s} {'kernel':8s} {'numba ms':>9s} {'numpy ms':>9s} "
          f"{'speedup':>8s} {'numba GF/s':>11s}")
    for a, b in zip(fast["cases"], slow["cases"]):
        assert a["case"] == b["case"] and a["kernel"] == b["kernel"]
        print(f"{a['case']:26s} {a['kernel']:8s} {a['ms']:9.3f} "
              f"{b['ms']:9.3f} {b['ms'] / a['ms']:7.1f}x {a['gflops']:11.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
