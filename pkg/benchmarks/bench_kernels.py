"""Benchmark the hot kernels: numba @njit vs the pure-numpy fallback.

Run:  python benchmarks/bench_kernels.py [--sizes 50,200,800]

Times one SGHMC fit (burn-in 5n + 1000 sampling steps) and one ensemble
prediction pass for each dataset size, on both backends, and reports the
speedup.  The same precomputed noise and minibatch streams feed both
backends, so the max output deviation is also printed.
"""

import argparse
import time

import numpy as np

from nago.kernels import _impl


def make_problem(n, d=8, het=True, seed=0):
    rng = np.random.default_rng(seed)
    h, n_out = 10, 2 if het else 1
    P = d * h + h + 2 * (h * h + h) + h * n_out + n_out + (0 if het else 1)
    X = rng.random((n, d))
    y = np.sin(3 * X[:, 0]) + rng.normal(0, 0.1, n)
    w0 = rng.normal(0, 0.1, P)
    m = min(32, n)
    n_burn, n_keep, keep = 5 * n, 100, 10
    total = n_burn + n_keep * keep
    batch_idx = rng.integers(0, n, (total, m))
    noise = rng.normal(0, 1, (total, P))
    args = (w0, X, y, h, n_out, het, 1e-6, 1.0, batch_idx, noise, n_burn, keep, n_keep, 1e-2, 0.05)
    return args, P


def time_fn(fn, args, repeats=3):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="50,200,800", help="comma-separated dataset sizes")
    opts = ap.parse_args()
    sizes = [int(s) for s in opts.sizes.split(",")]

    np_nll, np_chain, np_fwd = _impl.build(None)
    try:
        from numba import njit
    except ImportError:
        raise SystemExit("numba is not installed; nothing to compare")
    nb_nll, nb_chain, nb_fwd = _impl.build(njit)

    # warm the JIT outside the timed region
    warm, _ = make_problem(10)
    t0 = time.perf_counter()
    nb_chain(*warm)
    print(f"numba JIT compile: {time.perf_counter() - t0:.1f}s (one-off per process)\n")

    print(f"{'n':>5} {'kernel':<18} {'numpy':>10} {'numba':>10} {'speedup':>8} {'max|diff|':>10}")
    for n in sizes:
        args, P = make_problem(n)
        t_np, out_np = time_fn(np_chain, args)
        t_nb, out_nb = time_fn(nb_chain, args)
        diff = float(np.max(np.abs(out_np - out_nb)))
        print(f"{n:>5} {'sghmc_chain':<18} {t_np * 1e3:>8.1f}ms {t_nb * 1e3:>8.1f}ms "
              f"{t_np / t_nb:>7.2f}x {diff:>10.2e}")

        W = out_np
        Xq = np.random.default_rng(1).random((2000, 8))
        t_np, f_np = time_fn(np_fwd, (W, Xq, 10, 2))
        t_nb, f_nb = time_fn(nb_fwd, (W, Xq, 10, 2))
        diff = float(np.max(np.abs(f_np - f_nb)))
        print(f"{n:>5} {'ensemble_forward':<18} {t_np * 1e3:>8.1f}ms {t_nb * 1e3:>8.1f}ms "
              f"{t_np / t_nb:>7.2f}x {diff:>10.2e}")


if __name__ == "__main__":
    main()
