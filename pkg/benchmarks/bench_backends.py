#!/usr/bin/env python3
"""Timing comparison of the numba kernels against the pure-numpy fallback.

Run after installing the package:

    python benchmarks/bench_backends.py [--repeats 200]

Reports per-call times for each kernel on workload sizes matching the
simulator's hot loops (small dense vectors hit per worker per iteration),
and cross-checks that both backends agree numerically.
"""

import argparse
import time

import numpy as np

from leasgd.backends import load_backend


def timeit(fn, args, repeats):
    fn(*args)  # warm-up / JIT compile
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def workloads(rng):
    n = 10
    diag = np.linspace(1.0, 3.0, n)
    b = rng.normal(size=n)
    w = rng.normal(size=n)

    X64 = rng.normal(size=(64, 8))
    y64 = np.where(rng.random(64) > 0.5, 1.0, -1.0)
    w8 = rng.normal(size=8)

    lab = rng.integers(0, 2, 64).astype(np.int64)
    mlp_dim = 8 * 16 + 16 + 16 * 2 + 2
    params = 0.3 * rng.normal(size=mlp_dim)

    m = 15
    W = np.zeros((m, m))
    for i in range(m):
        W[i, i] = W[i, (i + 1) % m] = W[i, (i - 1) % m] = 1.0 / 3.0
    states = rng.normal(size=(m, n))
    target = rng.normal(size=n)

    return [
        ("quad_loss(n=10)", "quad_loss", (diag, b, w, 0.0)),
        ("quad_grad(n=10)", "quad_grad", (diag, b, w, 0.0)),
        ("logistic_loss(64x8)", "logistic_loss", (X64, y64, w8, 0.01)),
        ("logistic_grad(64x8)", "logistic_grad", (X64, y64, w8, 0.01)),
        ("mlp_loss_grad(64x8)", "mlp_loss_grad", (params, X64, lab, 16, 2)),
        ("mix_states(15x10)", "mix_states", (W, states)),
        ("mean_sq_dist(15x10)", "mean_sq_dist", (states, target)),
    ]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=2000)
    args = parser.parse_args()

    np_im = load_backend("numpy")
    try:
        nb_im = load_backend("numba")
    except ImportError:
        print("numba unavailable; nothing to compare")
        return

    rng = np.random.default_rng(0)
    rows = []
    for label, name, call_args in workloads(rng):
        t_np = timeit(getattr(np_im, name), call_args, args.repeats)
        t_nb = timeit(getattr(nb_im, name), call_args, args.repeats)
        a = getattr(np_im, name)(*call_args)
        b = getattr(nb_im, name)(*call_args)
        agree = np.allclose(
            np.hstack([np.ravel(x) for x in (a if isinstance(a, tuple) else (a,))]),
            np.hstack([np.ravel(x) for x in (b if isinstance(b, tuple) else (b,))]),
            rtol=1e-9,
        )
        rows.append((label, t_np * 1e6, t_nb * 1e6, t_np / t_nb, agree))

    print(f"{'kernel':<22} {'numpy us':>10} {'numba us':>10} {'speedup':>8} {'agree':>6}")
    for label, t_np, t_nb, speedup, agree in rows:
        print(f"{label:<22} {t_np:>10.2f} {t_nb:>10.2f} {speedup:>8.2f} {str(agree):>6}")


if __name__ == "__main__":
    main()
