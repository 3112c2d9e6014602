#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-python fallback.

Times batch expression evaluation (eval_many), single-point evaluation
(eval_one), and both integrators on the planar cubic/sine interconnection,
then prints a speedup table.  Run from the repository root::

    python3 benchmarks/bench_core.py [--repeat N]
"""

import argparse
import time

import numpy as np

from regiongain._core import _fallback
from regiongain.dynamics import _stack_programs
from regiongain.expr import compile_program, parse

try:
    from regiongain._core import _speedups
except ImportError:
    _speedups = None

F_SRC = "-1.5*x1 + 2*(z1^3/3 - 3*z1^2/2 + 2*z1)"
G_SRC = "-z1 + sin(x1^2/10)"
NAMES = ("x1", "z1")


def _best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def build_cases():
    prog = compile_program(parse(F_SRC), NAMES)
    flat = _stack_programs((
        compile_program(parse(F_SRC), NAMES),
        compile_program(parse(G_SRC), NAMES),
    ))
    rng = np.random.default_rng(0)
    X_big = np.ascontiguousarray(rng.uniform(-5, 5, (200_000, 2)))
    x_one = np.ascontiguousarray(rng.uniform(-5, 5, 2))
    y0 = np.array([2.0, -1.0])

    def eval_many(impl):
        impl.eval_many(prog.ops, prog.arg, prog.val, X_big)

    def eval_one(impl):
        for _ in range(5000):
            impl.eval_one(prog.ops, prog.arg, prog.val, x_one)

    def rk4(impl):
        ops, arg, val, starts = flat
        impl.rk4(ops, arg, val, starts, 2, y0, 5.0, 1e-3, 10)

    def rk45(impl):
        ops, arg, val, starts = flat
        impl.rk45(ops, arg, val, starts, 2, y0, 20.0, 1e-8, 1e-10, 1000)

    return [
        ("eval_many (200k rows)", eval_many),
        ("eval_one  (5k calls)", eval_one),
        ("rk4       (T=5, dt=1e-3)", rk4),
        ("rk45      (T=20, rtol=1e-8)", rk45),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3,
                    help="repetitions per case; best time is reported")
    args = ap.parse_args()

    if _speedups is None:
        print("compiled backend not built; showing fallback timings only")
    header = f"{'case':<30} {'python':>10} {'compiled':>10} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, fn in build_cases():
        t_py = _best_of(lambda: fn(_fallback), args.repeat)
        if _speedups is not None:
            t_c = _best_of(lambda: fn(_speedups), args.repeat)
            print(f"{name:<30} {t_py * 1e3:>8.2f}ms {t_c * 1e3:>8.2f}ms "
                  f"{t_py / t_c:>8.1f}x")
        else:
            print(f"{name:<30} {t_py * 1e3:>8.2f}ms {'-':>10} {'-':>9}")


if __name__ == "__main__":
    main()
