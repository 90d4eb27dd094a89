"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--sizes 5,6]

Times field evaluation and the L^p reduction on random sets at each
resolution, checks that both backends agree, and prints one row per case.
``THREADS`` applies to the compiled backend as usual.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from hyperext import _backend
from hyperext.dyadic import CellSet
from hyperext.extension import REFERENCE_GRID, Density, extend, lp_power


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--sizes", default="5,6", help="comma-separated resolutions N")
    ap.add_argument("--density", type=float, default=0.4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    names = sorted(_backend.BACKENDS)
    if "compiled" not in names:
        print("compiled kernels are not built; only the fallback is timed")
    grid = REFERENCE_GRID
    rng = np.random.default_rng(args.seed)
    print(f"threads={_backend.threads()} grid=({grid.R_t}, {grid.R_x}, {grid.M_t}, {grid.M_x})")
    print(f"{'N':>3} {'cells':>6} {'kernel':>8} " + " ".join(f"{n:>10}" for n in names) + f" {'speedup':>8} {'max diff':>9}")
    for N in (int(s) for s in args.sizes.split(",")):
        A = CellSet.from_mask(rng.random((1 << N, 1 << N)) < args.density, N)
        f = Density(A)
        fields = {n: extend(f, grid, backend=n) for n in names}
        ref = fields[names[-1]].samples
        diff = max(np.abs(fields[n].samples - ref).max() for n in names) / np.abs(ref).max()
        t_field = {n: best_of(lambda n=n: extend(f, grid, backend=n), args.repeat) for n in names}
        t_norm = {n: best_of(lambda n=n: lp_power(fields[n], 3.5, backend=n), args.repeat) for n in names}
        for label, t in (("field", t_field), ("lp", t_norm)):
            speed = t["python"] / t["compiled"] if "compiled" in t else 1.0
            row = " ".join(f"{t[n]:>9.4f}s" for n in names)
            print(f"{N:>3} {len(A):>6} {label:>8} {row} {speed:>7.2f}x {diff if label == 'field' else 0.0:>9.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
