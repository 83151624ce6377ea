"""Timing comparison of the two kernel backends.

Runs the hot kernels (pyramid build, maximal sweep, partition DP, ball
tables) under both backends and prints a small table.  Results are checked
for bitwise agreement while timing, so this doubles as a large-input parity
test.

Usage: python3 benchmarks/bench_kernels.py [--depth 20] [--m 600] [--repeat 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from jnlab import kernels


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--depth", type=int, default=20, help="1-d dyadic depth")
    ap.add_argument("--m", type=int, default=600, help="metric space size")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    leaves = rng.uniform(0.0, 1.0, 1 << args.depth)

    pts = rng.uniform(0.0, 1.0, (args.m, 2))
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    orders = np.argsort(d, axis=1, kind="stable").astype(np.int64)
    w = np.ones(args.m)
    fvals = rng.uniform(0.0, 1.0, args.m)

    initial = kernels.current_backend()
    backends = kernels.available_backends()
    if backends == ("numpy",):
        print("numba unavailable or disabled; timing numpy only")

    cases = {
        "pyramid": lambda: kernels.build_pyramid(leaves, args.depth, 1),
        "maximal": lambda: kernels.maximal_sweep(
            *kernels.build_pyramid(leaves, args.depth, 1), 1),
        "dp": lambda: kernels.dp_sweep(
            *kernels.build_pyramid(np.abs(leaves), args.depth, 1), 1),
        "ball_tables": lambda: kernels.ball_tables(orders, w, fvals),
    }

    results: dict[str, dict[str, float]] = {name: {} for name in cases}
    outputs: dict[str, dict[str, object]] = {name: {} for name in cases}
    for backend in backends:
        kernels.use_backend(backend)
        for name, fn in cases.items():
            fn()  # warm-up (JIT compile on the numba side)
            results[name][backend] = _time(fn, args.repeat)
            outputs[name][backend] = fn()

    header = f"{'kernel':<12}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name in cases:
        row = f"{name:<12}"
        for backend in backends:
            row += f"{results[name][backend] * 1e3:>10.2f}ms"
        if len(backends) == 2:
            a, b = (results[name][bk] for bk in backends)
            row += f"{b / a:>9.2f}x" if backends[0] == "numba" else f"{a / b:>9.2f}x"
        print(row)

    if len(backends) == 2:
        for name in cases:
            a, b = outputs[name][backends[0]], outputs[name][backends[1]]
            ta = a if isinstance(a, tuple) else (a,)
            tb = b if isinstance(b, tuple) else (b,)
            for xa, xb in zip(ta, tb):
                assert np.array_equal(np.asarray(xa), np.asarray(xb)), name
        print("backend outputs bitwise identical")

    kernels.use_backend(initial)


if __name__ == "__main__":
    main()
