"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--sizes 64 256 1024] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from relham import _backend
from relham.dynamics import IntegratorConfig, run
from relham.energy import LagrangianState, ModelSpec
from relham.measure import build_reference


def cases(n, rng):
    eta = np.cumsum(rng.uniform(0.01, 0.1, n))
    etab = np.cumsum(rng.uniform(0.01, 0.1, n))
    v = rng.normal(size=n)
    w = np.full(n, 1.0 / n)
    crossed = eta + rng.normal(scale=0.05, size=n)
    starts = np.arange(n, dtype=np.intp)
    args_a = (0.5, 1.5, 1.0, 1.0)
    return {
        "pair_forces": lambda k: k.pair_forces(eta, w, *args_a),
        "pair_energies": lambda k: k.pair_energies(eta, w, *args_a),
        "pair_relative": lambda k: k.pair_relative(eta, etab, v, w, *args_a),
        "sticky_merge": lambda k: k.sticky_merge(crossed, v, w, starts),
    }


def time_call(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 256, 1024])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if "compiled" not in _backend.BACKENDS:
        print("compiled extension not built; only the numpy fallback is available")
    backends = sorted(_backend.BACKENDS)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<15}{'N':>6}" + "".join(f"{b + ' [s]':>16}" for b in backends) + f"{'speedup':>10}")
    for n in args.sizes:
        for name, fn in cases(n, rng).items():
            times = {b: time_call(lambda: fn(_backend.BACKENDS[b]), args.repeat) for b in backends}
            speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
            print(f"{name:<15}{n:>6}" + "".join(f"{times[b]:>16.3e}" for b in backends) + f"{speed:>10.1f}")

    ref = build_reference(64)
    st = LagrangianState(ref.labels, -1.05 * (ref.labels - 0.5))
    cfg = IntegratorConfig(dt=1e-3, t_end=2.0, output_stride=100)
    model = ModelSpec.pressureless()
    for b in backends:
        prev = _backend.use(b)
        t = min(timeit.repeat(lambda: run(st, ref, model, cfg), number=1, repeat=3))
        _backend.use(prev)
        print(f"sticky run N=64, 2000 steps, {b}: {t:.3f} s")


if __name__ == "__main__":
    main()
