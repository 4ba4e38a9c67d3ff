"""Time the compiled loop kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat N] [--size HxW]

Each pair is checked for identical output before timing.  Compilation
happens during the warm-up call and is excluded.
"""

import argparse
import time

import numpy as np

from autostereo import classic, stereogram
from autostereo._accel import HAVE_NUMBA
from autostereo.stereogram import StereoGeometry, shift_map


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", default="256x256")
    args = ap.parse_args()
    H, W = (int(v) for v in args.size.lower().split("x"))
    rng = np.random.default_rng(0)
    g = StereoGeometry.for_width(W)
    depth = np.ones((H, W))
    depth[H // 4: 3 * H // 4, W // 4: 3 * W // 4] = 0.3
    shifts = shift_map(depth, g)
    tex = rng.random((H, g.stripe_width))
    img = stereogram.encode_random_dot(depth, g, 0).data
    cfg = classic.default_config(g)

    cases = {
        "propagate_rows": (stereogram._propagate_rows_nb, stereogram._propagate_rows_np, (shifts, tex)),
        "window_match": (classic._match_nb, classic._match_np,
                         (img, cfg.s_min, cfg.s_max, cfg.window_h, cfg.window_w)),
        "period_scores": (classic._period_scores_nb, classic._period_scores_np, (img, 2, W // 2 - 1)),
    }
    print(f"image {H}x{W}, numba available: {HAVE_NUMBA}, best of {args.repeat}")
    print(f"{'kernel':<16}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, (fast, slow, fargs) in cases.items():
        a, b = fast(*fargs), slow(*fargs)  # warm-up, and compile when numba is present
        if not np.allclose(a, b, rtol=0, atol=1e-12):
            raise SystemExit(f"{name}: kernels disagree")
        tf = best_of(lambda: fast(*fargs), args.repeat)
        ts = best_of(lambda: slow(*fargs), args.repeat)
        print(f"{name:<16}{tf * 1e3:>12.2f}{ts * 1e3:>12.2f}{ts / tf:>9.1f}x")


if __name__ == "__main__":
    main()
