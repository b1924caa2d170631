"""Compare the numba kernels against their numpy fallbacks.

Run with ``python3 benchmarks/bench_kernels.py``.  The second column is what a
process started with HELIXCLUSTER_NO_NUMBA=1 would use everywhere.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from helixcluster import _kernels
from helixcluster.modes import RadialGrid, outer_solve


def best_of(fn, repeat: int) -> float:
    fn()  # warm-up, also triggers compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def sweep_case(n: int, m: int):
    t = np.linspace(0.0, 8.0, n)
    lam = np.outer(t, np.arange(1, m + 1, dtype=float))
    src = np.sin(np.outer(t, np.ones(m))) + 1j * np.exp(-t)[:, None]
    y0 = np.zeros(m, dtype=complex)
    return lambda jit: _kernels.damped_sweep(t, lam, src, y0, True, use_numba=jit)


def recurrence_case(n: int, m: int):
    # the sequential part of damped_sweep alone; cell_integrals is vectorised numpy either way
    rng = np.random.default_rng(1)
    decay = np.exp(-rng.uniform(0.0, 2.0, (n - 1, m)))
    I = rng.normal(size=(n - 1, m)) + 0j
    y0 = np.zeros(m, dtype=complex)

    def run(jit):
        if jit:
            return _kernels._recurrence_jit(decay, I, y0, True)
        return _kernels.recurrence_numpy(decay, I, y0, True)
    return run


def jet_case(points: int, K: int, seed: int):
    def bump(x):
        r2 = x[..., 0] ** 2 + (x[..., 1] - 0.2) ** 2
        return np.exp(-r2) * (1 + 0.3 * x[..., 0])

    # outer solutions carry r-derivatives, which the compiled path needs
    field = outer_solve(bump, 1.0, RadialGrid.log_spaced(1e-4, 1e3, 1024), K=K).field
    x = np.random.default_rng(seed).normal(scale=2.0, size=(points, 2))
    return lambda jit: field.jet(x, use_numba=jit)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        print("numba unavailable (or HELIXCLUSTER_NO_NUMBA set); only the numpy path is timed")
    cases = {
        "damped_sweep n=20000 m=32": sweep_case(20000, 32),
        "damped_sweep n=200000 m=4": sweep_case(200000, 4),
        "recurrence n=200000 m=4": recurrence_case(200000, 4),
        "FourierField.jet 20000 pts K=32": jet_case(20000, 32, args.seed),
        "recurrence n=200000 m=4": recurrence_case(200000, 4),
        "FourierField.jet 200000 pts K=16": jet_case(200000, 16, args.seed),
    }
    print(f"{'case':36s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speedup':>8s}")
    for name, run in cases.items():
        slow = best_of(lambda: run(False), args.repeat)
        if _kernels.HAVE_NUMBA:
            fast = best_of(lambda: run(True), args.repeat)
            print(f"{name:36s} {1e3 * fast:11.2f} {1e3 * slow:11.2f} {slow / fast:8.1f}")
        else:
            print(f"{name:36s} {'-':>11s} {1e3 * slow:11.2f} {'-':>8s}")


if __name__ == "__main__":
    main()
