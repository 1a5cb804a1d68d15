"""Time the numba kernels against their pure-numpy / Python fallbacks.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

The per-kernel table calls both implementations in one process.  The
end-to-end rows run ``detect_bad_data`` and ``repair_outliers`` in a fresh
interpreter with and without ``HISTVAR_DISABLE_NUMBA`` so the env switch
itself is exercised.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from histvar import _kernels

E2E = """
import time
from histvar.cleaning import CleaningConfig, detect_bad_data, repair_outliers
from histvar.synthetic import random_walk
x = random_walk(2000, 1.0, seed=1)
cfg = CleaningConfig(rng_seed=1)
detect_bad_data(x, cfg); repair_outliers(x, cfg)          # warm-up / JIT
t = time.perf_counter()
for s in range({n}):
    detect_bad_data(random_walk(2000, 1.0, seed=s), CleaningConfig(rng_seed=s))
    repair_outliers(random_walk(2000, 1.0, seed=s), cfg)
print(time.perf_counter() - t)
"""


def cases(rng):
    walk = np.cumsum(rng.normal(size=2000))
    walk[::97] += 25.0
    mat = rng.normal(size=(256, 1999))
    present = rng.random((300, 50)) > 0.1
    return {
        "trim_ratios 256x1999": lambda k: k.trim_ratios(mat, 60),
        "outlier_pass n=2000": lambda k: k.outlier_pass(walk.copy(), 3.0, 0.10,
                                                        np.zeros(2000, bool)),
        "spike_pass n=2000 w=3": lambda k: k.spike_pass(walk.copy() + 100.0, 3, 0.10, 1e-4,
                                                        np.zeros(2000, bool)),
        "trailing_counts 300x50": lambda k: k.trailing_counts(present, 10),
        "ever_before 300x50": lambda k: k.ever_before(present),
    }


def best(fn, repeat):
    number = 3
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def end_to_end(disable: bool, n: int) -> float:
    env = dict(os.environ)
    env.pop("HISTVAR_DISABLE_NUMBA", None)
    if disable:
        env["HISTVAR_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", E2E.format(n=n)], env=env, check=True,
                         capture_output=True, text=True)
    return float(out.stdout.strip())


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--series", type=int, default=20, help="series in the end-to-end run")
    args = ap.parse_args(argv)
    if _kernels.NB is None:
        print("numba is not importable; nothing to compare")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'numpy (ms)':>12s} {'numba (ms)':>12s} {'speed-up':>9s}")
    for name, fn in cases(rng).items():
        fn(_kernels.NB)                                    # compile outside the timing
        py = best(lambda: fn(_kernels.PY), args.repeat)
        nb = best(lambda: fn(_kernels.NB), args.repeat)
        print(f"{name:28s} {py * 1e3:12.3f} {nb * 1e3:12.3f} {py / nb:8.1f}x")
    py = end_to_end(True, args.series)
    nb = end_to_end(False, args.series)
    label = f"detect+repair x{args.series}"
    print(f"{label:28s} {py * 1e3:12.1f} {nb * 1e3:12.1f} {py / nb:8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
