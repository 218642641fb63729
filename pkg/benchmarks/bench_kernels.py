"""Compare the compiled and numpy kernel backends.

Run with ``python benchmarks/bench_kernels.py``. Prints the best-of-N wall
time per call for each backend and the speedup, plus the largest absolute
difference between the two outputs.
"""
import argparse
import time

import numpy as np

from driftguard import _pykernels

try:
    from driftguard import _ckernels
except ImportError:
    _ckernels = None


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def binned_case(n_states, n_samples, rng, shape=_pykernels.GAUSSIAN):
    base = rng.normal(0.0, n_states / 12, n_samples)
    lo = -(n_states // 2)
    shifts = 0.8 * np.arange(lo, lo + n_states, dtype=float)
    return base, shifts, 1.0, shape, lo, n_states


def survival_case(n_states, steps, rng):
    mats = rng.random((steps - 1, n_states, n_states)) ** 8
    mats /= mats.sum(axis=2, keepdims=True)
    v1 = rng.dirichlet(np.ones(n_states))
    lo, hi = n_states // 4, 3 * n_states // 4
    v1[:lo] = 0.0
    v1[hi + 1 :] = 0.0
    return v1, mats, lo, hi


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    if _ckernels is None:
        print("compiled backend not built; only timing the numpy backend")

    cases = []
    for n in (50, 100, 200):
        cases.append((f"binned_rows      states={n:<4d} samples=500 gauss",
                      "binned_rows", binned_case(n, 500, rng)))
    for n in (50, 200):
        cases.append((f"binned_rows      states={n:<4d} samples=500 epan",
                      "binned_rows", binned_case(n, 500, rng, _pykernels.EPANECHNIKOV)))
    for n in (50, 200, 500):
        cases.append((f"restricted_surv  states={n:<4d} steps=5",
                      "restricted_survival", survival_case(n, 5, rng)))

    print(f"{'case':44s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s} {'max diff':>10s}")
    for label, name, case in cases:
        t_py, out_py = best_time(lambda: getattr(_pykernels, name)(*case), args.repeat)
        if _ckernels is None:
            print(f"{label:44s} {1e3 * t_py:12.3f}")
            continue
        t_c, out_c = best_time(lambda: getattr(_ckernels, name)(*case), args.repeat)
        if name == "binned_rows":
            diff = float(np.max(np.abs(np.asarray(out_py) - np.asarray(out_c))))
        else:
            diff = max(abs(out_py[0] - out_c[0]),
                       float(np.max(np.abs(np.asarray(out_py[1]) - np.asarray(out_c[1])))))
        print(f"{label:44s} {1e3 * t_py:12.3f} {1e3 * t_c:12.3f} {t_py / t_c:8.1f} {diff:10.1e}")


if __name__ == "__main__":
    main()
