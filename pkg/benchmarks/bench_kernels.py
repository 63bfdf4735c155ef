"""Compare the compiled and pure-Python kernel backends.

Times the two hot kernels (coordinate-descent sweeps and regression-tree
growth/prediction) on matched inputs and prints a small table with the
speedup.  Also asserts that both backends grow bitwise-identical trees,
so the timing comparison is apples to apples.

Usage: python3 benchmarks/bench_kernels.py [--n 2000] [--p 200]
                                           [--trees 40] [--repeat 3]
"""

import argparse
import time

import numpy as np

from glmgof import _backend
from glmgof._rng import philox


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_cd(n, p, repeat):
    rng = philox(11)
    X = np.asfortranarray(rng.standard_normal((n, p)))
    beta_true = np.zeros(p)
    beta_true[:5] = 1.0
    y = X @ beta_true + 0.5 * rng.standard_normal(n)
    col_ss = np.einsum("ij,ij->j", X, X) / n
    lam = 0.05
    pen = np.full(p, lam)

    results = {}
    for name in ("pure", "compiled"):
        try:
            prev = _backend.set_backend(name)
        except Exception as exc:
            print("  %-8s unavailable (%s)" % (name, exc))
            continue
        try:
            def run():
                beta = np.zeros(p)
                r = y - X @ beta
                _backend.cd_solve(X, r, beta, col_ss, pen, 1e-8, 1000)
                return beta
            results[name] = (_time(run, repeat), run())
        finally:
            _backend.set_backend(prev)
    return results


def bench_trees(n, p, trees, repeat):
    rng = philox(13)
    X = rng.standard_normal((n, p))
    Xf = np.asfortranarray(X)
    Xc = np.ascontiguousarray(X)
    r = np.where(X[:, 0] > 0.3, 1.0, -1.0) + 0.2 * rng.standard_normal(n)
    seeds = np.arange(1, trees + 1, dtype=np.uint64) * np.uint64(977)
    mtry = max(1, p // 3)

    fits = {}
    results = {}
    for name in ("pure", "compiled"):
        try:
            prev = _backend.set_backend(name)
        except Exception as exc:
            print("  %-8s unavailable (%s)" % (name, exc))
            continue
        try:
            def grow():
                return [_backend.tree_fit(Xf, r, int(s), mtry, 5,
                                          2**31 - 1, n)
                        for s in seeds]
            t_fit = _time(grow, repeat)
            forest = grow()
            fits[name] = forest

            def pred():
                return [_backend.tree_predict(Xc, *t[:5]) for t in forest]
            t_pred = _time(pred, repeat)
            results[name] = (t_fit, t_pred)
        finally:
            _backend.set_backend(prev)

    if len(fits) == 2:
        for ta, tb in zip(fits["pure"], fits["compiled"]):
            for a, b in zip(ta[:5], tb[:5]):
                assert np.array_equal(np.asarray(a), np.asarray(b)), \
                    "backend trees differ"
        print("  tree structures bitwise identical across backends")
    return results


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--p", type=int, default=200)
    ap.add_argument("--trees", type=int, default=40)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    print("coordinate descent  (n=%d, p=%d, 1 cold path point)"
          % (args.n, args.p))
    cd = bench_cd(args.n, args.p, args.repeat)
    for name, (t, beta) in sorted(cd.items()):
        print("  %-8s %8.4fs   nnz=%d" % (name, t,
                                          int(np.sum(beta != 0))))
    if len(cd) == 2:
        da = cd["pure"][1]
        db = cd["compiled"][1]
        print("  max |beta_pure - beta_compiled| = %.3e"
              % np.max(np.abs(da - db)))
        print("  speedup: %.1fx" % (cd["pure"][0] / cd["compiled"][0]))

    print("regression trees    (n=%d, p=%d, %d trees)"
          % (args.n, args.p, args.trees))
    tr = bench_trees(args.n, args.p, args.trees, args.repeat)
    for name, (tf, tp) in sorted(tr.items()):
        print("  %-8s fit %8.4fs   predict %8.4fs" % (name, tf, tp))
    if len(tr) == 2:
        print("  speedup: fit %.1fx, predict %.1fx"
              % (tr["pure"][0] / tr["compiled"][0],
                 tr["pure"][1] / tr["compiled"][1]))


if __name__ == "__main__":
    main()
