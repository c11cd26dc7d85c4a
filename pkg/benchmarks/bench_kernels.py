"""Time the compiled kernels against their pure-Python twins.

Usage: python benchmarks/bench_kernels.py [--n 200000] [--repeat 3]
"""
import argparse
import timeit

import numpy as np

from opasym import _ckernels, _pykernels
from opasym.coeffs import power_law


def inputs(n):
    gamma = power_law(0.5).gammas(n + 1)
    rng = np.random.default_rng(0)
    ang = rng.uniform(0, 2 * np.pi, n)
    a = 1j * (1 + rng.uniform(0.01, 0.1, n))
    b = rng.uniform(-0.01, 0.01, n) + 1j * rng.uniform(-0.01, 0.01, n)
    return {
        "three_term": (gamma, np.empty(0), 1.0, n, 1000, True),
        "unwind": (a.real.copy(), a.imag.copy(), b.real.copy(), b.imag.copy(), ang),
        "neumaier_cumsum": (rng.normal(size=n),),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'kernel':<16} {'cython s':>10} {'python s':>10} {'speedup':>8}")
    for name, call in inputs(args.n).items():
        fast = min(timeit.repeat(lambda: getattr(_ckernels, name)(*call), number=1, repeat=args.repeat))
        slow = min(timeit.repeat(lambda: getattr(_pykernels, name)(*call), number=1, repeat=args.repeat))
        print(f"{name:<16} {fast:>10.4f} {slow:>10.4f} {slow / fast:>7.1f}x")


if __name__ == "__main__":
    main()
