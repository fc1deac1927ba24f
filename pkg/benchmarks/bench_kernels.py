"""Timing of the numba kernels against their numpy counterparts.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Sizes follow the presets: M = 4 antennas and N*L up to 160 RIS elements.
"""
import argparse
import timeit

import numpy as np

from riskg import _accel


def cases(rng):
    for n in (20, 60, 160):
        M = 4
        A = rng.standard_normal((n * M, n * M)) + 1j * rng.standard_normal((n * M, n * M))
        R = A @ A.conj().T
        x = np.exp(2j * np.pi * rng.random(n))
        W = rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))
        b2, f = rng.random(16) + 0.1, rng.random(16)
        yield n, R, x, M, W, b2, f


def bench(k, R, x, M, W, b2, f, repeat):
    Rx, _ = k.congruence(R, x, M)
    calls = {
        "congruence": lambda: k.congruence(R, x, M),
        "contract": lambda: k.contract(Rx, W),
        "bisect": lambda: k.bisect(b2, f, 0.5, 1e-10, 200),
    }
    return {name: min(timeit.repeat(fn, number=5, repeat=repeat)) / 5 for name, fn in calls.items()}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if _accel.kernels_numba is None:
        print("numba is not installed; nothing to compare")
        return
    rng = np.random.default_rng(0)
    print(f"{'NL':>4} {'kernel':<11} {'numpy [us]':>11} {'numba [us]':>11} {'speedup':>8}")
    for n, R, x, M, W, b2, f in cases(rng):
        bench(_accel.kernels_numba, R, x, M, W, b2, f, 1)          # compile outside the timing
        t_np = bench(_accel.kernels_numpy, R, x, M, W, b2, f, args.repeat)
        t_nb = bench(_accel.kernels_numba, R, x, M, W, b2, f, args.repeat)
        for name in t_np:
            print(f"{n:>4} {name:<11} {1e6 * t_np[name]:>11.1f} {1e6 * t_nb[name]:>11.1f} "
                  f"{t_np[name] / t_nb[name]:>7.1f}x")


if __name__ == "__main__":
    main()
