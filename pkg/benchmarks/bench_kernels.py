"""Benchmark: compiled kernels vs the NumPy fallback.

Run:  python3 benchmarks/bench_kernels.py [--repeat N]

Times the four hot paths on representative workloads and prints a table
with the speedup of the compiled backend.  Both backends are imported
directly, so this reports the real choice `capflow.kernels` makes at
import time.
"""
import argparse
import time

import numpy as np

from capflow import _kernels_py as PY

try:
    from capflow import _kernels_c as CC
except ImportError:  # pragma: no cover - build without a compiler
    CC = None


def _timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def workloads():
    rng = np.random.default_rng(42)
    gx, gw = np.polynomial.legendre.leggauss(24)

    s = 0.125
    n_cells = 200
    cx = rng.uniform(-1, 1, n_cells)
    cy = rng.uniform(-1, 1, n_cells)
    z_mixed = rng.uniform(-2, 2, 3000) + 1j * rng.uniform(-2, 2, 3000)
    w = rng.uniform(0, 1, n_cells).astype(complex)

    a, b = 0.0 + 0.0j, 4.0 + 0.0j
    t = np.linspace(0.02, 0.98, 1500) - 0.5
    z_on = (a + b) / 2 + t * (b - a)                      # principal values
    z_off = z_on + 1j * rng.uniform(0.3, 3.0, t.size)     # far zone

    zm = rng.normal(size=400) + 1j * rng.normal(size=400)
    wm = rng.uniform(0, 1, 400)

    return [
        ("cell_matrix 3000x200",
         lambda K: K.cell_matrix(cx, cy, s, z_mixed)),
        ("cell_apply 3000x200",
         lambda K: K.cell_apply(cx, cy, s, z_mixed, w)),
        ("segment PV x1500",
         lambda K: K.segment_transform(a, b, 1.0, z_on, gx, gw)),
        ("segment far x1500",
         lambda K: K.segment_transform(a, b, 1.0, z_off, gx, gw)),
        ("menger_c2 n=400",
         lambda K: K.menger_c2_pointwise(zm, wm)),
    ]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rows = []
    for name, fn in workloads():
        t_py = _timeit(lambda: fn(PY), args.repeat)
        if CC is not None:
            t_c = _timeit(lambda: fn(CC), args.repeat)
            rows.append((name, t_py, t_c, t_py / t_c))
        else:
            rows.append((name, t_py, None, None))

    print(f"{'workload':<24} {'numpy':>10} {'compiled':>10} {'speedup':>8}")
    for name, t_py, t_c, sp in rows:
        if t_c is None:
            print(f"{name:<24} {t_py * 1e3:>8.2f}ms {'(absent)':>10}")
        else:
            print(f"{name:<24} {t_py * 1e3:>8.2f}ms {t_c * 1e3:>8.2f}ms "
                  f"{sp:>7.1f}x")


if __name__ == "__main__":
    main()
