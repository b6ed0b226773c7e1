"""Time the compiled kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 3]

Prints one line per kernel with the best wall time of each backend and the
speed-up.  Inputs are sized like a reduced envelope build: 10^4 samples on
a three-dimensional grid.
"""

import argparse
import timeit

import numpy as np

from probenv.kernels import available_backends


def cases(rng):
    ys = rng.standard_normal((10000, 3)) * [5.0, 3.0, 20.0]
    h = np.array([0.9, 0.6, 3.5])
    mins, steps, shape = np.array([-20.0, -12.0, -80.0]), np.array([1.0, 1.0, 4.0]), (41, 25, 41)
    pts = rng.uniform(mins, mins + steps * (np.array(shape) - 1), (2000, 3))
    vals = rng.standard_normal(int(np.prod(shape)))
    return {
        "kde_points (2000 pts)": lambda k: k.kde_points(ys, h, pts),
        "kde_grid_truncated (42k nodes)": lambda k: k.kde_grid_truncated(ys, h, mins, steps, shape, 5.0),
        "multilinear (2000 pts)": lambda k: k.multilinear(vals, mins, steps, shape, pts),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernels are not built; only the numpy fallback is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} " + " ".join(f"{b:>10s}" for b in backends) + "   speed-up")
    for name, fn in cases(rng).items():
        times = {b: min(timeit.repeat(lambda m=m: fn(m), number=1, repeat=args.repeat))
                 for b, m in backends.items()}
        row = " ".join(f"{times[b]:9.4f}s" for b in backends)
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:34s} {row}   {speed:7.1f}x")


if __name__ == "__main__":
    main()
