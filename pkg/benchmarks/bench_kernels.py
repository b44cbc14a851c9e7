"""Compiled extension against the numpy fallback on the two hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from robust_elicit import _kernels_py

try:
    from robust_elicit import _core
except ImportError:
    _core = None


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_cd(impl, n, p, repeat):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(n, p))
    y = X[:, :5] @ np.ones(5) + rng.normal(size=n)
    w = np.ones(n)
    colsq = (w @ (X * X)) / n
    Xt = np.ascontiguousarray(X.T)
    lam = 0.05 * float(np.max(np.abs(X.T @ y)) / n)

    def run():
        beta = np.zeros(p)
        impl.weighted_cd(Xt, y.copy(), beta, w, colsq, lam, 1e-8, 10_000)
    return _best(run, repeat)


def bench_pairs(impl, K, repeat):
    rng = np.random.default_rng(1)
    a = rng.integers(0, K // 4, K).astype(float)
    b = rng.integers(0, K // 4, K).astype(float)
    return _best(lambda: impl.pair_counts(a, b), repeat)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    impls = [("python", _kernels_py)] + ([("compiled", _core)] if _core is not None else [])
    if _core is None:
        print("compiled extension not built; timing the fallback only")
    cases = [(f"weighted_cd n={n} p={p}", lambda impl, n=n, p=p: bench_cd(impl, n, p, args.repeat))
             for n, p in ((100, 20), (100, 500), (250, 20))]
    cases += [(f"pair_counts K={K}", lambda impl, K=K: bench_pairs(impl, K, args.repeat)) for K in (100, 2000)]
    print(f"{'case':<28}" + "".join(f"{name:>12}" for name, _ in impls) + ("     speedup" if _core else ""))
    for label, fn in cases:
        times = [fn(impl) for _, impl in impls]
        line = f"{label:<28}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
        if len(times) == 2:
            line += f"{times[0] / times[1]:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
