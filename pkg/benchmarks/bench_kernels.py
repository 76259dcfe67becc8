#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Times each hot kernel on a realistic 256x256 workload and, when both
backends are importable, prints the speedup and verifies the outputs are
bit-identical on the benchmark inputs.

Usage: python benchmarks/bench_kernels.py [--size 256] [--repeat 3]
"""

import argparse
import time

import numpy as np

from femurseg._kernels import get_implementations


def make_inputs(size: int):
    rng = np.random.RandomState(0)
    yy, xx = np.mgrid[:size, :size]
    blobs = np.zeros((size, size), dtype=bool)
    for _ in range(12):
        cy, cx = rng.randint(size, size=2)
        r = rng.randint(size // 32, size // 8)
        blobs |= (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    mask = blobs.astype(np.uint8)
    relief = (rng.rand(size, size) * 20).astype(np.float32)
    markers = np.zeros((size, size), dtype=np.int64)
    for label in (1, 2, 3, 4):
        markers[rng.randint(size), rng.randint(size)] = label
    scalar = (rng.rand(size, size) * 255).astype(np.float64)
    return mask, relief, markers, scalar


def cases(size: int, meanshift_size: int):
    mask, relief, markers, scalar = make_inputs(size)
    ms_scalar = scalar[:meanshift_size, :meanshift_size].copy()
    return [
        ("label_components(8)",
         lambda impl: impl.label_components(mask, 8)[0]),
        ("watershed_flood",
         lambda impl: impl.watershed_flood(relief, markers, 4)),
        ("chamfer_distance",
         lambda impl: impl.chamfer_distance(mask)),
        ("flood_fill_mask",
         lambda impl: impl.flood_fill_mask(scalar, size // 2, size // 2, 64.0)),
        (f"mean_shift({meanshift_size}x{meanshift_size})",
         lambda impl: impl.mean_shift(ms_scalar, 4, 30.0, 5)),
    ]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--size", type=int, default=256)
    parser.add_argument("--meanshift-size", type=int, default=64,
                        help="mean shift is O(n * window * iters); bench smaller")
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    impls = get_implementations()
    print(f"backends: {', '.join(impls)}")
    rows = []
    for name, call in cases(args.size, args.meanshift_size):
        timings = {}
        outputs = {}
        for impl_name, impl in impls.items():
            best = float("inf")
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                out = call(impl)
                best = min(best, time.perf_counter() - t0)
            timings[impl_name] = best
            outputs[impl_name] = out
        line = f"{name:34s}"
        for impl_name in impls:
            line += f"  {impl_name}: {timings[impl_name] * 1e3:9.2f} ms"
        if len(impls) == 2:
            speedup = timings["pure"] / timings["compiled"]
            identical = np.array_equal(outputs["pure"], outputs["compiled"])
            line += f"  speedup: {speedup:7.1f}x  identical: {identical}"
        rows.append(line)
        print(line)
    if len(impls) == 2:
        print("\nall kernels compared on identical inputs; outputs must match "
              "bit for bit")


if __name__ == "__main__":
    main()
