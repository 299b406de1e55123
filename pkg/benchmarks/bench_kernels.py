"""Compare the numba and numpy kernel backends at training-loop sizes.

The last block times one batched forward/backward of a critic-sized MLP for
scale: the dense matmuls there cost far more per training step than any of
the kernels, so the backend choice moves total runtime only a little.

    python3 benchmarks/bench_kernels.py --repeat 2000
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from bagsac.kernels import jit_backend, numpy_backend
from bagsac.numerics import Mlp


def cases(rng):
    n_params = Mlp([27, 128, 128, 1]).n_params
    p, g = rng.normal(size=n_params), rng.normal(size=n_params)
    m, v = np.zeros(n_params), np.zeros(n_params)
    preds = rng.normal(size=(5, 25))
    xs, ys = rng.uniform(0, 300, 10), rng.choice([0.0, 4.0, 8.0], 10)
    ls, ws = np.full(10, 5.0), np.full(10, 2.0)
    dx, dy = rng.normal(size=10) * 50, rng.normal(size=10) * 4
    return {
        "adam_update (critic)": lambda k: k.adam_update(p, g, m, v, 3e-4, 0.9, 0.999, 1e-8, 1),
        "polyak (critic)": lambda k: k.polyak(m, p, 0.995),
        "pairwise_disagreement N=5": lambda k: k.pairwise_disagreement(preds),
        "box_overlaps 10 cars": lambda k: k.box_overlaps(100.0, 4.0, 0.0, 5.0, 2.0, xs, ys, ls, ws),
        "nearest_order 10 cars": lambda k: k.nearest_order(dx, dy),
    }


def per_call_us(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=repeat, repeat=3)) / repeat * 1e6


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)

    print(f"{'kernel':<28}{'numpy us':>10}{'numba us':>10}{'speedup':>9}")
    total = {"numpy": 0.0, "numba": 0.0}
    for name, call in cases(rng).items():
        call(jit_backend)  # compile outside the timed region
        t_np = per_call_us(lambda: call(numpy_backend), args.repeat)
        t_nb = per_call_us(lambda: call(jit_backend), args.repeat)
        total["numpy"] += t_np
        total["numba"] += t_nb
        print(f"{name:<28}{t_np:>10.2f}{t_nb:>10.2f}{t_np / t_nb:>8.1f}x")

    mlp = Mlp([27, 128, 128, 1], seed=0)
    x = rng.normal(size=(128, 27))

    def fwd_bwd():
        out, tape = mlp.forward(x)
        mlp.backward(tape, np.ones_like(out), input_grad=True)

    t_mm = per_call_us(fwd_bwd, max(args.repeat // 10, 50))
    print(f"\ncritic forward+backward, batch 128: {t_mm:.1f} us")
    print(f"one pass over every kernel above:  numpy {total['numpy']:.1f} us, numba {total['numba']:.1f} us")


if __name__ == "__main__":
    main()
