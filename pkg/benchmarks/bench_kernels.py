"""Compare the numba kernels with their numpy fallbacks on a realistic batch.

    python3 benchmarks/bench_kernels.py [--iterations 2000] [--repeat 5]

Builds per-BS inputs for a batch of simulated worlds once, then times each kernel
on both paths and checks that they agree.
"""

import argparse
import time

import numpy as np

from mmwave_cs import _kernels as K
from mmwave_cs.analysis import AnalysisContext
from mmwave_cs.simulator import _concat, _offsets, draw_world, iteration_rng, world_arrays


def build(n_iter: int):
    ctx = AnalysisContext(protocol="dcsra")
    parts = []
    for i in range(n_iter):
        w = draw_world(ctx, 2000.0, iteration_rng(0, 9, i))
        arr = world_arrays(w, ctx.protocol, ctx)
        arr["active_u"], arr["deaf"] = w.active_u, w.deaf
        parts.append(arr)
    off = _offsets(parts)
    sense = _concat(parts, "sense")
    cat = lambda k: np.concatenate([p[k] for p in parts])  # noqa: E731
    contender = K.mark_within_np(*sense, parts[0]["table"])
    sinr_args = (
        off,
        cat("power"),
        contender,
        cat("active_u"),
        0.25,
        cat("deaf"),
        K.mark_within_np(*_concat(parts, "hear"), parts[0]["ann_table"]),
        cat("valid"),
        np.array([p["signal"] for p in parts]),
        ctx.sigma2,
    )
    return {
        "count_within": ((off, *sense, parts[0]["table"]), K.count_within_np, getattr(K, "count_within_nb", None)),
        "mark_within": ((*sense, parts[0]["table"]), K.mark_within_np, getattr(K, "mark_within_nb", None)),
        "sinr": (sinr_args, K.sinr_np, getattr(K, "sinr_nb", None)),
    }, int(off[-1])


def best_of(fn, args, repeat):
    fn(*args)  # warm-up (numba compiles here)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    kernels, n_bs = build(args.iterations)
    print(f"{args.iterations} worlds, {n_bs} BS entries; numba available: {K._HAVE_NUMBA}")
    print(f"{'kernel':<14}{'numpy ms':>12}{'numba ms':>12}{'speed-up':>10}")
    for name, (kargs, f_np, f_nb) in kernels.items():
        t_np = best_of(f_np, kargs, args.repeat)
        if f_nb is None:
            print(f"{name:<14}{t_np * 1e3:>12.3f}{'n/a':>12}{'':>10}")
            continue
        t_nb = best_of(f_nb, kargs, args.repeat)
        np.testing.assert_allclose(f_np(*kargs), f_nb(*kargs), rtol=1e-12)
        print(f"{name:<14}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
