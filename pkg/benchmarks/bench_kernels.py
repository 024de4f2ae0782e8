"""Compare the compiled chain loop with its pure-Python/numpy fallback.

    python3 benchmarks/bench_kernels.py [--iterations 20000 200000] [--repeat 3]

Both paths receive the same pre-drawn random numbers, so the timing covers
the loop alone. The fallback is the same function run uncompiled, which is
what ``PENALTYDP_DISABLE_NUMBA=1`` selects at import time.
"""

import argparse
import time

import numpy as np

from penaltydp import NUMBA_ENABLED, _kernels


def inputs(k, seed=0):
    rng = np.random.default_rng(seed)
    y = np.r_[np.ones(30), np.zeros(70)]
    return dict(
        kind=_kernels.KIND_BERNOULLI, p0=1.0, p1=1.0, lower=0.05, upper=0.95,
        n=float(y.size), s_n=float(y.sum()), theta0=0.5,
        disp=rng.uniform(-0.1, 0.1, k), u=rng.random(k), z=rng.standard_normal(k),
    )


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iterations", type=int, nargs="+", default=[20000, 200000])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not NUMBA_ENABLED:
        print("numba disabled by PENALTYDP_DISABLE_NUMBA; both columns run the fallback")

    modes = [("mh", _kernels.MODE_MH, 0.0, 0.0), ("penalty", _kernels.MODE_PENALTY, 1.0, 0.0),
             ("expfam", _kernels.MODE_EXPFAM, 0.0, 40.0)]
    warm = inputs(10)
    for _, mode, sigma, xi in modes:
        _kernels.chain_kernel(*warm.values(), mode, sigma, xi)

    print(f"{'mode':8} {'iters':>8} {'compiled s':>11} {'fallback s':>11} {'speedup':>8} {'same':>5}")
    for k in args.iterations:
        a = list(inputs(k).values())
        for name, mode, sigma, xi in modes:
            full = a + [mode, sigma, xi]
            t_fast, fast = best_of(_kernels.chain_kernel, full, args.repeat)
            t_slow, slow = best_of(_kernels.chain_kernel.py_func, full, 1)
            same = all(np.allclose(x, y, rtol=1e-12, atol=1e-12, equal_nan=True) for x, y in zip(fast, slow))
            print(f"{name:8} {k:8d} {t_fast:11.4f} {t_slow:11.4f} {t_slow / t_fast:8.1f} {str(same):>5}")


if __name__ == "__main__":
    main()
