#!/usr/bin/env python3
"""Benchmark the compiled tridiagonal sweep against the LAPACK fallback.

Times one Cayley sub-step (band multiply + solve) on shapes matching the
two hot paths: 1D evolution (batch 1 x 1024 and 1 x 4096) and the 2D
Strang sweeps (batch 128 x 128, 256 x 256), plus a full 2D magnetic
evolution step for end-to-end context.

Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from comgreen._kernels import available_backends


def bench_sweep(fn, B, N, repeats):
    rng = np.random.default_rng(7)
    scale = 0.05
    sub = scale * (rng.standard_normal((B, N)) + 1j * rng.standard_normal((B, N)))
    diag = scale * (rng.standard_normal((B, N)) + 1j * rng.standard_normal((B, N)))
    sup = scale * (rng.standard_normal((B, N)) + 1j * rng.standard_normal((B, N)))
    sub[:, 0] = 0
    sup[:, -1] = 0
    psi = rng.standard_normal((B, N)) + 1j * rng.standard_normal((B, N))
    fn(sub, diag, sup, psi)  # warm up
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(sub, diag, sup, psi)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_evolve(n, steps, dt):
    import warnings

    from comgreen.catalog import catalog_hamiltonian
    from comgreen.gridsim import Axis, evolve, gaussian_packet

    axes = (Axis(-11.5, 11.5, n), Axis(-11.5, 11.5, n))
    psi0 = gaussian_packet(axes, (0.5, 0.0), 1.0)
    H = catalog_hamiltonian("magnetic")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        t0 = time.perf_counter()
        evolve(H, psi0, steps * dt, dt)
    return time.perf_counter() - t0


def main():
    backends = available_backends()
    print(f"backends available: {', '.join(backends)}")
    shapes = [(1, 1024, 2000), (1, 4096, 500), (128, 128, 500), (256, 256, 100)]
    header = f"{'batch x n':>12} | " + " | ".join(f"{name:>12}" for name in backends)
    print(header)
    print("-" * len(header))
    for B, N, reps in shapes:
        times = {name: bench_sweep(fn, B, N, reps) for name, fn in backends.items()}
        row = f"{f'{B} x {N}':>12} | " + " | ".join(
            f"{times[name] * 1e6:>9.1f} us" for name in backends
        )
        if len(times) == 2:
            row += f"   (speedup {times['fallback'] / times['native']:.1f}x)"
        print(row)

    import comgreen._kernels as k

    print(f"\nselected backend: {k.BACKEND}")
    steps = 50
    wall = bench_evolve(128, steps, 2e-3)
    print(f"2D magnetic evolution, 128^2 grid, {steps} steps: {wall:.3f} s "
          f"({wall / steps * 1e3:.2f} ms/step)")


if __name__ == "__main__":
    main()
