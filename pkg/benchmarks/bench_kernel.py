"""Time the angular quadrature on both backends.

    python3 benchmarks/bench_kernel.py [--repeat 5]

Prints one line per (n, alpha, backend) with the best wall time for the
full kernel table abscissa and the speedup of the compiled core.
"""
import argparse
import timeit

import numpy as np

from hslab import kernel

CASES = ((3, 1.5), (4, 2.5), (7, 4.0))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    t = np.exp(kernel.table_abscissa())
    print(f"compiled backend available: {kernel.BACKEND == 'cython'}; {t.size} abscissae")
    for n, alpha in CASES:
        times = {}
        for backend in ("python", None):
            if backend is None and kernel.BACKEND != "cython":
                continue
            fn = lambda: kernel.angular_kernel_array(n, alpha, t, backend=backend)
            fn()
            times[backend or "cython"] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        for name, sec in times.items():
            print(f"n={n} alpha={alpha:<4g} {name:<7} {sec * 1e3:9.2f} ms")
        if "cython" in times:
            print(f"  speedup {times['python'] / times['cython']:.1f}x")


if __name__ == "__main__":
    main()
