"""Time the compiled kernels against their numpy fallbacks.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``.
"""

import argparse
import timeit

import numpy as np

from varstop.kernels import backends


def cases(rng):
    n = 2048
    zs = np.sort(rng.uniform(1.0, 50.0, n))
    a, b = rng.normal(size=n), rng.uniform(0.0, 2.0, n)
    cs = np.linspace(0.0, 5.0, n)
    xs = np.sort(rng.uniform(0.0, 1.0, 100_000))
    ys = np.sin(8 * xs) + rng.normal(scale=0.01, size=xs.size)
    mean = zs / 10.0
    second = mean**2 + rng.uniform(0.0, 1.0, n)
    return {
        "envelope_argmax 2048x2048": lambda k: k.envelope_argmax(a, b, cs),
        "upper_hull 1e5": lambda k: k.upper_hull(xs, ys),
        "best_pair_variance 2048": lambda k: k.best_pair_variance(mean, second),
    }


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    impls = backends()
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s}" + "".join(f"{name:>12s}" for name in impls) + "     speedup")
    for label, fn in cases(rng).items():
        times = {name: min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat))
                 for name, k in impls.items()}
        row = f"{label:28s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times.values())
        if "cython" in times:
            row += f"  {times['python'] / times['cython']:8.1f}x"
        print(row)


if __name__ == "__main__":
    main()
