"""Compare the compiled kd-tree with the numpy fallback.

Times index construction, nearest-neighbour queries and a full Chamfer
distance on random clouds of a few sizes, and checks that both backends
return identical distances.

    python3 benchmarks/bench_kernels.py [--sizes 512 2048 8192] [--repeat 5]
"""
import argparse
import time

import numpy as np

from toolforge import nn


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def chamfer(a, b, backend):
    ia, ib = nn.build_index(a, backend), nn.build_index(b, backend)
    return 0.5 * ib.query(a)[0].mean() + 0.5 * ia.query(b)[0].mean()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[512, 2048, 8192])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if "cython" not in nn.BACKENDS:
        raise SystemExit("compiled extension not built; run pip install -e . first")

    rng = np.random.default_rng(args.seed)
    print(f"{'n':>6} {'kernel':>8} {'python s':>10} {'cython s':>10} {'speedup':>8}")
    for n in args.sizes:
        a = rng.normal(size=(n, 3))
        b = rng.normal(size=(n, 3)) + 0.1
        idx = {k: nn.build_index(b, k) for k in ("python", "cython")}
        same = np.array_equal(idx["python"].query(a)[0], idx["cython"].query(a)[0])
        rows = {
            "build": lambda k: nn.build_index(b, k),
            "query": lambda k: idx[k].query(a),
            "chamfer": lambda k: chamfer(a, b, k),
        }
        for name, fn in rows.items():
            tp = best_of(lambda: fn("python"), args.repeat)
            tc = best_of(lambda: fn("cython"), args.repeat)
            # the fallback has no index to build, so its build time is ~0
            ratio = f"{tp / tc:>7.1f}x" if tp > 1e-5 else f"{'-':>8}"
            print(f"{n:>6} {name:>8} {tp:>10.5f} {tc:>10.5f} {ratio}")
        print(f"{n:>6} distances identical: {same}")


if __name__ == "__main__":
    main()
