"""Time the compiled and pure-numpy convolution kernels on a training-sized layer.

    python benchmarks/bench_conv.py [--repeat N] [--dtype float32|float64]
"""
import argparse
import time

import numpy as np

from dimrecon import kernels


def bench(backend, x, taps, bias, repeat):
    best_f = best_b = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        y, xp = kernels.conv3d_forward(x, taps, bias, backend=backend, return_padded=True)
        t1 = time.perf_counter()
        kernels.conv3d_backward(xp, taps, np.ones_like(y), backend=backend)
        t2 = time.perf_counter()
        best_f, best_b = min(best_f, t1 - t0), min(best_b, t2 - t1)
    return best_f, best_b


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--dtype", default="float64", choices=["float32", "float64"])
    ap.add_argument("--shape", type=int, nargs=5, default=(4, 32, 64, 6, 16), metavar=("B", "X", "Y", "T", "C"))
    ap.add_argument("--cout", type=int, default=16)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    x = rng.standard_normal(args.shape).astype(args.dtype)
    taps = rng.standard_normal((3, 3, 3, args.shape[-1], args.cout)).astype(args.dtype)
    bias = rng.standard_normal(args.cout)

    results = {}
    for name in kernels.available_backends():
        results[name] = bench(name, x, taps, bias, args.repeat)
        f, b = results[name]
        print(f"{name:<9} forward {f * 1e3:8.2f} ms   backward {b * 1e3:8.2f} ms")
    if {"compiled", "python"} <= results.keys():
        speedup = sum(results["python"]) / sum(results["compiled"])
        print(f"compiled speedup over python: {speedup:.2f}x")


if __name__ == "__main__":
    main()
