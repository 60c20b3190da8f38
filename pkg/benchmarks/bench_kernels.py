"""Time the numba and numpy kernel paths side by side.

    python benchmarks/bench_kernels.py [--repeat 50] [--dims 10250 235690]

Both paths live in ``fedht.kernels.IMPLEMENTATIONS`` regardless of the
``FEDHT_BACKEND`` setting, so one process can compare them.
"""

import argparse
import timeit

import numpy as np

from fedht.kernels import IMPLEMENTATIONS


def cases(d, rng):
    x = rng.standard_normal(d)
    lam = 3.0  # keeps roughly 0.3% of a standard normal vector
    m = max(1, d // 100)
    idx = np.sort(rng.choice(d, size=m, replace=False)).astype(np.int64)
    vals = rng.standard_normal(m)
    out = np.zeros(d)
    return {
        "threshold_select": (x, lam),
        "topk_select": (x, m),
        "scatter": (d, idx, vals),
        "scatter_add": (out, idx, vals, 0.1),
    }


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--repeat", type=int, default=50)
    p.add_argument("--dims", type=int, nargs="+", default=[2570, 10250, 235690])
    args = p.parse_args()
    rng = np.random.default_rng(0)

    print(f"{'kernel':<18} {'d':>8} {'numpy (us)':>12} {'numba (us)':>12} {'speedup':>8}")
    for d in args.dims:
        for name, argv in cases(d, rng).items():
            ref = IMPLEMENTATIONS["numpy"][name](*argv)
            got = IMPLEMENTATIONS["numba"][name](*argv)  # also triggers compilation
            if ref is not None:
                assert np.array_equal(ref, got), name
            times = {}
            for backend in ("numpy", "numba"):
                fn = IMPLEMENTATIONS[backend][name]
                best = min(timeit.repeat(lambda: fn(*argv), number=args.repeat, repeat=3))
                times[backend] = 1e6 * best / args.repeat
            print(f"{name:<18} {d:>8} {times['numpy']:>12.1f} {times['numba']:>12.1f} "
                  f"{times['numpy'] / times['numba']:>7.2f}x")


if __name__ == "__main__":
    main()
