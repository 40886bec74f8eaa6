"""Compare the compiled and pure-Python kernels on speed and agreement.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from benchdesign import _pykernels as py

try:
    from benchdesign import _ckernels as cy
except ImportError:  # extension not built
    cy = None


def _time(fn, args_list, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        for args in args_list:
            fn(*args)
        best = min(best, time.perf_counter() - start)
    return best / len(args_list)


def _pair_se_inputs(rng, a):
    n = rng.integers(10, 200, a).astype(float)
    mean = rng.uniform(5, 15, a)
    var = rng.uniform(0.1, 4, a)
    pairs = [(i, j) for i in range(a) for j in range(i + 1, a)]
    pi = np.array([p[0] for p in pairs], dtype=np.intp)
    pj = np.array([p[1] for p in pairs], dtype=np.intp)
    return n, mean, var, pi, pj


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--points", type=int, default=400)
    args = ap.parse_args(argv)
    if cy is None:
        print("compiled kernels not available; only the Python backend exists")
        return 1

    rng = np.random.default_rng(0)
    df = rng.integers(4, 300, args.points).astype(float)
    ncp = rng.uniform(0.0, 8.0, args.points)
    x = ncp + rng.normal(0, 2, args.points)
    nct_args = list(zip(x.tolist(), df.tolist(), ncp.tolist()))
    t_args = list(zip(x.tolist(), df.tolist()))

    rows = []
    for name, args_list in (("t_cdf", t_args), ("nct_cdf", nct_args)):
        tp = _time(getattr(py, name), args_list, args.repeat)
        tc = _time(getattr(cy, name), args_list, args.repeat)
        diff = max(abs(getattr(py, name)(*a) - getattr(cy, name)(*a)) for a in args_list)
        rows.append((name, tp, tc, diff))

    for mode, label in ((0, "pair_se simple"), (1, "pair_se pct-one"), (2, "pair_se pct-all")):
        n, mean, var, pi, pj = _pair_se_inputs(rng, 8)
        if mode == 1:
            pi = np.zeros(7, dtype=np.intp)
            pj = np.arange(1, 8, dtype=np.intp)
        out_p = np.empty(len(pi))
        out_c = np.empty(len(pi))
        call = [(mode, n, mean, var, pi, pj, out_p)]
        tp = _time(py.pair_se, call, args.repeat * 50)
        tc = _time(cy.pair_se, [(mode, n, mean, var, pi, pj, out_c)], args.repeat * 50)
        rows.append((label, tp, tc, float(np.max(np.abs(out_p - out_c)))))

    print(f"{'kernel':18s} {'python us':>10s} {'cython us':>10s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, tp, tc, diff in rows:
        print(f"{name:18s} {tp * 1e6:10.2f} {tc * 1e6:10.2f} {tp / tc:8.1f} {diff:11.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
