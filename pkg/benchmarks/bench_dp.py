"""Time the DP alignment table with the numba kernel against the numpy fallback.

    python benchmarks/bench_dp.py [--sizes 51 101 201] [--repeat 3]

Both paths must give the same table; the script checks that before timing.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from elasticbmc import _accel
from elasticbmc._dp_kernels import dp_table, slope_steps


def _pair(n: int):
    t = np.linspace(0.0, 1.0, n)
    f1 = np.exp(-0.5 * ((t - 0.5) / 0.05) ** 2)
    f2 = 0.9 * np.exp(-0.5 * ((t - 0.35) / 0.07) ** 2)
    q = [np.sign(g) * np.sqrt(np.abs(g)) for g in (np.gradient(f1, t), np.gradient(f2, t))]
    return t, q[0], q[1]


def _best(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[51, 101, 201])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    steps = slope_steps(4)
    if not _accel.HAVE_NUMBA:
        print("numba unavailable (or ELASTICBMC_NO_NUMBA set); timing numpy only")
    print(f"{'N':>6} {'numpy [s]':>11} {'numba [s]':>11} {'speedup':>8}")
    for n in args.sizes:
        t, q1, q2 = _pair(n)
        ref = dp_table(q1, q2, t, steps, 0.01, use_numba=False)
        t_np = _best(lambda: dp_table(q1, q2, t, steps, 0.01, use_numba=False), args.repeat)
        if _accel.HAVE_NUMBA:
            got = dp_table(q1, q2, t, steps, 0.01, use_numba=True)  # also compiles
            if not all(np.array_equal(a, b) for a, b in zip(ref, got)):
                raise SystemExit(f"numba and numpy tables differ at N={n}")
            t_nb = _best(lambda: dp_table(q1, q2, t, steps, 0.01, use_numba=True), args.repeat)
            print(f"{n:>6} {t_np:>11.4f} {t_nb:>11.4f} {t_np / t_nb:>7.1f}x")
        else:
            print(f"{n:>6} {t_np:>11.4f} {'-':>11} {'-':>8}")


if __name__ == "__main__":
    main()
