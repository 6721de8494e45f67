"""Compare the jit spike-scan against the vectorized numpy fallback.

Both paths compute the identical first-fire step; this script times them
on a grid of transaction counts and slot lengths and prints the speedup.
Rows are verified to agree before the timing is trusted.

Run:
    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeat 200
"""

import argparse
import sys
import time

import numpy as np

from posn.kernels import HAVE_NUMBA, first_fire_numba, first_fire_numpy


def make_workload(rng, n_tx, encoding):
    keys = rng.integers(0, np.iinfo(np.uint64).max, size=n_tx,
                        dtype=np.uint64)
    probs = rng.uniform(0.005, 0.05, size=n_tx)
    isis = rng.integers(5, 400, size=n_tx).astype(np.int64)
    weights = rng.uniform(1.0, 2.0, size=n_tx)
    use_rate = encoding in ("rate", "both")
    use_temporal = encoding in ("temporal", "both")
    return keys, probs, isis, weights, use_rate, use_temporal


def bench(fn, workload, n_steps, repeat):
    keys, probs, isis, weights, use_rate, use_temporal = workload
    args = (keys, probs, isis, weights, n_steps, 0.9048374180359595, 1.0,
            use_rate, use_temporal)
    result = fn(*args)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return result, (time.perf_counter() - t0) / repeat * 1e3


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=100,
                    help="timed iterations per cell (default 100)")
    ap.add_argument("--seed", type=int, default=7)
    opts = ap.parse_args(argv)

    rng = np.random.default_rng(opts.seed)
    if HAVE_NUMBA:
        # compile outside the timed region
        bench(first_fire_numba, make_workload(rng, 4, "both"), 50, 1)
    else:
        print("numba unavailable (or disabled); numpy column only\n")

    header = f"{'encoding':<10}{'n_tx':>6}{'steps':>7}{'numpy ms':>10}"
    if HAVE_NUMBA:
        header += f"{'numba ms':>10}{'speedup':>9}"
    print(header)
    print("-" * len(header))

    for encoding in ("rate", "temporal", "both"):
        for n_tx in (4, 16, 64, 256):
            for n_steps in (250, 1000):
                workload = make_workload(rng, n_tx, encoding)
                ref, t_np = bench(first_fire_numpy, workload, n_steps,
                                  opts.repeat)
                row = f"{encoding:<10}{n_tx:>6}{n_steps:>7}{t_np:>10.3f}"
                if HAVE_NUMBA:
                    got, t_nb = bench(first_fire_numba, workload, n_steps,
                                      opts.repeat)
                    if got != ref:
                        print(f"MISMATCH {encoding} n_tx={n_tx} "
                              f"steps={n_steps}: {got} != {ref}")
                        return 1
                    row += f"{t_nb:>10.3f}{t_np / t_nb:>8.1f}x"
                print(row)
    return 0


if __name__ == "__main__":
    sys.exit(main())
