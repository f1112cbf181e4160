"""Time the fused RNN/GRU folds on the compiled and numpy backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per (cell, shape, backend) with the best forward+backward
wall time, and the speedup of the compiled kernel. The ``auto`` column is
what a fold picks when no backend is forced.
"""

import argparse
import time

import numpy as np

from permrnn import _kernels_py, kernels
from permrnn import tensor as T
from permrnn.models import GruParams, RnnParams

try:
    from permrnn import _kernels as _compiled
except ImportError:
    _compiled = None

SHAPES = [(32, 10, 1, 20, 1), (32, 100, 1, 20, 1), (200, 10, 1, 16, 4), (32, 10, 20, 64, 8)]


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def bench_rnn(B, steps, d, h, k, impl, repeat):
    rng = np.random.default_rng(0)
    p = RnnParams.init(d, h, k, rng)
    X = rng.normal(size=(B, steps, d))
    S0 = T.repeat_rows(p.s0, B)

    def run():
        out = kernels.rnn_fold(p.W_x, p.W_s, p.B, p.W_out, S0, X, activation="tanh", impl=impl)
        T.backward(T.sum(out))

    return _time(run, repeat)


def bench_gru(B, steps, d, h, impl, repeat):
    rng = np.random.default_rng(0)
    p = GruParams.init(d, h, rng)
    X = rng.normal(size=(B, steps, d))
    S0 = T.repeat_rows(p.s0, B)

    def run():
        T.backward(T.sum(kernels.gru_fold(p.weights(), S0, X, impl=impl)))

    return _time(run, repeat)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [("python", _kernels_py)] + ([("compiled", _compiled)] if _compiled else []) + [("auto", None)]
    if _compiled is None:
        print("compiled extension not built; timing the numpy fallback only")
    print(f"{'cell':5} {'B':>4} {'T':>4} {'d':>3} {'h':>4} {'k':>3} " +
          " ".join(f"{name:>11}" for name, _ in backends) + ("    speedup" if _compiled else ""))
    for B, steps, d, h, k in SHAPES:
        for cell in ("rnn", "gru"):
            times = []
            for _, impl in backends:
                if cell == "rnn":
                    times.append(bench_rnn(B, steps, d, h, k, impl, args.repeat))
                else:
                    times.append(bench_gru(B, steps, d, h, impl, args.repeat))
            line = f"{cell:5} {B:4d} {steps:4d} {d:3d} {h:4d} {k if cell == 'rnn' else h:3d} "
            line += " ".join(f"{t * 1e3:9.3f}ms" for t in times)
            if _compiled:
                line += f"   {times[0] / times[1]:7.1f}x"
            print(line)


if __name__ == "__main__":
    main()
