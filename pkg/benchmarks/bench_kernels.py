"""Time each numba kernel against its numpy counterpart on representative sizes.

    python benchmarks/bench_kernels.py [--repeat 5] [--csv timings.csv]

The numba column is skipped when numba is missing or WEAKID_DISABLE_NUMBA is
set. Both variants are checked for agreement before timing; the first numba
call (compilation) is excluded.
"""

from __future__ import annotations

import argparse
import csv
import sys
import timeit

import numpy as np

from weakid import kernels
from weakid._accel import HAVE_NUMBA


def cases(rng):
    """(name, numpy callable, numba callable, size label) with fresh inputs per call."""
    a = rng.standard_normal((256, 301))
    w = rng.standard_normal(41)
    yield "correlate_rows", (lambda: kernels.correlate_rows_numpy(a, w)), \
        (lambda: kernels.correlate_rows_numba(a, w)), "256x301, kernel 41"

    S, C, N, F, Q = 10, 3, 1001, 71, 300
    g = rng.standard_normal((S, C, N))
    st = rng.standard_normal((S, F))
    offs = np.arange(F) - F // 2
    qidx = np.sort(rng.choice(np.arange(F // 2, N - F // 2), Q, replace=False))
    V = rng.standard_normal(F)
    yield "weak_operator", (lambda: kernels.weak_operator_numpy(g, st, offs, qidx, V, 1)), \
        (lambda: kernels.weak_operator_numba(g, st, offs, qidx, V, 1)), f"{S} terms, {C} comps, {Q} queries"

    x0 = rng.standard_normal(100_000)
    normals = rng.standard_normal((20, x0.size))
    params = np.array([0.0, 0.5, 0.9, 0.1])
    yield "em_advance", (lambda: kernels.em_advance_numpy(x0.copy(), normals, 2e-4, 1, params)), \
        (lambda: kernels.em_advance_numba(x0.copy(), normals, 2e-4, 1, params)), "1e5 particles x 20 steps"

    xs = rng.standard_normal(1_000_000)
    yield "bin_counts", (lambda: kernels.bin_counts_numpy(xs, -4.0, 0.05, 161)), \
        (lambda: kernels.bin_counts_numba(xs, -4.0, 0.05, 161)), "1e6 samples, 161 bins"


def _agree(a, b):
    if isinstance(a, tuple):
        return all(_agree(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.allclose(a, b, rtol=1e-12, atol=1e-12 * max(1.0, np.max(np.abs(a))))
    return a == b


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5, help="timed repetitions (best is reported)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--csv", help="also write the table to this CSV file")
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    rows = []
    print(f"numba {'enabled' if HAVE_NUMBA else 'disabled'}; best of {args.repeat}")
    print(f"{'kernel':<16} {'size':<30} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    ok = True
    for name, f_np, f_nb, size in cases(rng):
        t_np = min(timeit.repeat(f_np, number=1, repeat=args.repeat)) * 1e3
        if HAVE_NUMBA:
            same = _agree(f_np(), f_nb())  # also triggers compilation
            ok &= same
            t_nb = min(timeit.repeat(f_nb, number=1, repeat=args.repeat)) * 1e3
            speed = f"{t_np / t_nb:8.1f}x" + ("" if same else " MISMATCH")
            nb_text = f"{t_nb:10.2f}"
        else:
            t_nb, nb_text, speed = float("nan"), f"{'-':>10}", f"{'-':>8}"
        print(f"{name:<16} {size:<30} {t_np:10.2f} {nb_text} {speed}")
        rows.append((name, size, t_np, t_nb))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["kernel", "size", "numpy_ms", "numba_ms"])
            writer.writerows(rows)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
