"""Time the compiled ZINB kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--size N] [--repeat R]

Inputs mimic a batch of forecasts from a sparse road network: mostly
zero targets, large zero-inflation, moderate NB size.
"""
import argparse
import timeit

import numpy as np

from riskgraph import _pykernels

try:
    from riskgraph import _ckernels
except ImportError:
    _ckernels = None


def make_inputs(size, seed=0):
    rng = np.random.default_rng(seed)
    pi = rng.uniform(0.8, 0.999, size)
    n = rng.uniform(0.5, 20.0, size)
    p = rng.uniform(0.2, 0.9, size)
    y = np.where(rng.random(size) < 0.95, 0, rng.integers(1, 6, size)).astype(float)
    return pi, n, p, y


def cases(mod, pi, n, p, y):
    return {
        "zinb_nll": lambda: mod.zinb_nll(pi, n, p, y),
        "zinb_nll_grad": lambda: mod.zinb_nll_grad(pi, n, p, y),
        "zinb_entropy": lambda: mod.zinb_entropy(pi, n, p),
        "zinb_quantile(0.95)": lambda: mod.zinb_quantile(pi, n, p, 0.95),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels not built; only the fallback can be timed")
    data = make_inputs(args.size)
    py_cases = cases(_pykernels, *data)
    c_cases = cases(_ckernels, *data) if _ckernels else {}

    print(f"{'kernel':<22}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn in py_cases.items():
        t_py = min(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3
        if name in c_cases:
            t_c = min(timeit.repeat(c_cases[name], number=1, repeat=args.repeat)) * 1e3
            print(f"{name:<22}{t_py:>12.2f}{t_c:>12.2f}{t_py / t_c:>9.1f}x")
        else:
            print(f"{name:<22}{t_py:>12.2f}{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
