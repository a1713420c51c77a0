"""Compare the compiled and pure-Python march kernels.

    python3 benchmarks/bench_march.py [--repeat 5]

Times Stepper.march (one forward solve) and one Gramian application at several
mesh sizes, checks that both backends produce the same numbers, and prints a table.
"""
import argparse
import sys
import timeit

import numpy as np

from partialnull.hum import BACKENDS, HumConfig, HumProblem, Mesh1D, Stepper, TimeScheme, assemble
from partialnull.spectral import IntervalDomain

DOM = IntervalDomain(0.0, 2 * np.pi)
T, STEPS = 0.005, 400


def _cfg(n, backend):
    return HumConfig(Mesh1D(DOM, n), TimeScheme(T, STEPS), (DOM.L / n) ** 4, (0.0, np.pi),
                     lambda x: np.ones_like(x), lambda x: 100 * np.sin(x), lambda x: 100 * np.sin(x),
                     backend=backend)


def bench(n, repeat):
    ops = assemble(Mesh1D(DOM, n), lambda x: np.ones_like(x), (0.0, np.pi))
    dt = T / STEPS
    A, M = ops.M + ops.K.scale(dt), ops.M
    x0 = np.sin(Mesh1D(DOM, n).nodes)
    rhs = np.random.default_rng(0).normal(size=(STEPS, x0.size))
    row = {}
    outs = {}
    for name in sorted(BACKENDS):
        st = Stepper(A, M, name)
        outs[name] = st.march(x0, STEPS, rhs)
        t_march = min(timeit.repeat(lambda: st.march(x0, STEPS, rhs), number=1, repeat=repeat))
        p = HumProblem(_cfg(n, name))
        a = np.random.default_rng(1).normal(size=n - 1)
        t_gram = min(timeit.repeat(lambda: p.gramian(a), number=1, repeat=repeat))
        row[name] = (t_march, t_gram)
    diff = 0.0
    if len(outs) == 2:
        diff = float(np.max(np.abs(outs["cython"] - outs["python"])) / np.max(np.abs(outs["python"])))
    return row, diff


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", type=int, nargs="+", default=[50, 100, 200, 300, 1000])
    args = ap.parse_args(argv)
    if "cython" not in BACKENDS:
        print("compiled kernel not built; only the Python fallback is available, nothing to compare")
        return 0
    print(f"{STEPS} backward Euler steps per march; best of {args.repeat}")
    print(f"{'N':>6} {'march py [ms]':>14} {'march cy [ms]':>14} {'speedup':>8} "
          f"{'gram py [ms]':>13} {'gram cy [ms]':>13} {'speedup':>8} {'rel diff':>9}")
    for n in args.sizes:
        r, diff = bench(n, args.repeat)
        (mp, gp), (mc, gc) = r["python"], r["cython"]
        print(f"{n:>6} {1e3 * mp:>14.2f} {1e3 * mc:>14.2f} {mp / mc:>7.1f}x "
              f"{1e3 * gp:>13.2f} {1e3 * gc:>13.2f} {gp / gc:>7.1f}x {diff:>9.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
