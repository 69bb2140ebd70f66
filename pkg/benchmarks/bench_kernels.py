"""Time the compiled kernels against the numpy fallback on representative sizes.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is run on identical inputs in both backends; the table reports
the best wall time and the largest absolute difference of the outputs.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from ipdsaw.kernels import backends
from ipdsaw.law import WalkLaw


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def case_geom_conv(mod, rows=2000, width=2001):
    rng = np.random.default_rng(0)
    src = rng.random((rows, width))
    out = np.empty_like(src)

    def run():
        mod.geom_conv(src, 0.6, 0.6, out)
        return out.copy()
    return run


def case_area_layer(mod, A=1500, X=300):
    law = WalkLaw(1.0)
    rng = np.random.default_rng(1)
    prev = rng.random((A, 2 * X + 1))
    new = np.empty_like(prev)
    ret = np.empty(A)

    def run():
        tail = mod.area_layer(prev, new, ret, law.x, 1 / law.c, X, A - 1, False)
        return np.concatenate([new.ravel(), ret, [tail]])
    return run


def case_skew_shift(mod, S=3000, W=301):
    rng = np.random.default_rng(2)
    T = rng.random((S, W))
    out = np.empty_like(T)

    def run():
        mod.skew_shift(T, out, -150)
        return out.copy()
    return run


CASES = {"geom_conv": case_geom_conv, "area_layer": case_area_layer, "skew_shift": case_skew_shift}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    mods = backends()
    names = sorted(mods)
    print(f"{'kernel':<12}" + "".join(f"{n:>12}" for n in names) + f"{'speedup':>10}{'max|diff|':>12}")
    for kname, make in CASES.items():
        times, outs = {}, {}
        for n in names:
            times[n], outs[n] = _best(make(mods[n]), args.repeat)
        diff = max(float(np.max(np.abs(outs[n] - outs[names[0]]))) for n in names)
        speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        print(f"{kname:<12}" + "".join(f"{times[n] * 1e3:>10.2f}ms" for n in names)
              + f"{speed:>9.2f}x{diff:>12.2e}")


if __name__ == "__main__":
    main()
