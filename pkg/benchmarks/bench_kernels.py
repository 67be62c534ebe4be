"""Time the numba kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--end-to-end]

Kernel timings call both backend modules directly. ``--end-to-end`` also
times one centralized reference trial in a subprocess per backend, selected
through JDTC_DISABLE_NUMBA as a user would.
"""

import argparse
import os
import subprocess
import sys
import time
import timeit

import numpy as np

from jdtc import _kernels_numba as nb
from jdtc import _kernels_numpy as ref


def mixture(rng, J, n=4, spread=5.0):
    w = rng.uniform(0.05, 1.0, J)
    a = rng.normal(size=(J, n, n))
    covs = a @ np.swapaxes(a, 1, 2) / n + np.eye(n)
    return w / w.sum(), rng.normal(scale=spread, size=(J, n)), covs


def cases(rng):
    w1, m1, p1 = mixture(rng, 6)
    w2, m2, p2 = mixture(rng, 6)
    wr, mr, pr = mixture(rng, 36, spread=2.0)
    zhat = rng.uniform(10, 100, 6)
    jac = rng.normal(size=(6, 4))
    zs = rng.uniform(10, 100, 6)
    kap = np.full(6, 0.01)
    return {
        "geometric_mean 6x6": lambda k: k.geometric_mean(w1, m1, p1, w2, m2, p2, 0.4),
        "fuse_slot 6x6 + reduce": lambda k: k.fuse_slot(w1, m1, p1, w2, m2, p2, 0.4, 1e-15, 20.0, 6, True),
        "ekf_scalar_update J=6 |Z|=6": lambda k: k.ekf_scalar_update(w1, m1, p1, zhat, jac, 25.0, zs, kap, 0.95),
        "reduce_mixture J=36": lambda k: k.reduce_mixture(wr, mr, pr, 1e-15, 20.0, 6),
    }


def best(fn, repeat):
    n, _ = timeit.Timer(fn).autorange()
    return min(timeit.Timer(fn).repeat(repeat=repeat, number=n)) / n


def end_to_end(flag: str) -> float:
    code = (
        "import time; from jdtc.config import ScenarioConfig; from jdtc.sim import run_centralized;"
        "cfg = ScenarioConfig(); run_centralized(cfg, 0); t = time.perf_counter(); run_centralized(cfg, 1);"
        "print(time.perf_counter() - t)"
    )
    env = dict(os.environ, JDTC_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args()

    table = cases(np.random.default_rng(0))
    for fn in table.values():
        fn(nb)  # compile outside the timed region
    print(f"{'kernel':32s} {'numpy [us]':>12s} {'numba [us]':>12s} {'speedup':>8s}")
    for name, fn in table.items():
        t_ref = best(lambda: fn(ref), args.repeat)
        t_nb = best(lambda: fn(nb), args.repeat)
        print(f"{name:32s} {1e6 * t_ref:12.1f} {1e6 * t_nb:12.1f} {t_ref / t_nb:8.1f}")

    if args.end_to_end:
        t0 = time.perf_counter()
        t_ref, t_nb = end_to_end("1"), end_to_end("0")
        print(f"{'centralized trial (100 steps)':32s} {t_ref:11.2f}s {t_nb:11.2f}s {t_ref / t_nb:8.1f}")
        print(f"(end-to-end wall time {time.perf_counter() - t0:.0f}s)")


if __name__ == "__main__":
    main()
