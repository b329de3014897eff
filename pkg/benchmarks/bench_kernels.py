"""Time the numba kernels against their numpy fallbacks, plus one policy pass.

    python benchmarks/bench_kernels.py [--repeat N]

Both flavours live side by side in ``sweepkit._kernels``; the policy timing
uses whichever backend the import selected, so run it once more with
SWEEPKIT_DISABLE_NUMBA=1 to compare the end-to-end path.
"""

import argparse
import time

import numpy as np

from sweepkit import _kernels as k
from sweepkit.imgcore import _bilinear_axis
from sweepkit.policy import Policy, apply_policy
from sweepkit.rng import Rng


def best_of(fn, repeat):
    fn()  # warm-up, also triggers numba compilation
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
    y0, y1, wy = _bilinear_axis(32, 24)
    x0, x1, wx = _bilinear_axis(32, 24)
    src_r = rng.integers(-2, 34, (32, 32))
    src_c = rng.integers(-2, 34, (32, 32))
    p = rng.normal(size=(3072, 256))
    g = rng.normal(size=p.shape)
    acc_g, acc_d = np.zeros_like(p), np.zeros_like(p)
    return {
        "median k=5 32x32x3": lambda m: getattr(k, f"median_{m}")(img, 5),
        "bilinear 32->24": lambda m: getattr(k, f"bilinear_{m}")(img, y0, y1, wy, x0, x1, wx),
        "gather 32x32": lambda m: getattr(k, f"gather_{m}")(img, src_r, src_c),
        "adadelta 3072x256": lambda m: getattr(k, f"adadelta_{m}")(p, g, acc_g, acc_d, 0.95, 1e-6, 1.0),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    flavours = ["numpy"] + (["numba"] if k.HAVE_NUMBA else [])
    print(f"{'kernel':<22}" + "".join(f"{f:>12}" for f in flavours) + ("     speedup" if len(flavours) == 2 else ""))
    for name, call in cases().items():
        t = [best_of(lambda f=f: call(f), args.repeat) for f in flavours]
        row = f"{name:<22}" + "".join(f"{x * 1e3:>10.3f}ms" for x in t)
        if len(t) == 2:
            row += f"{t[0] / t[1]:>11.1f}x"
        print(row)
    img = np.random.default_rng(1).integers(0, 256, (32, 32, 3), dtype=np.uint8)
    pol = Policy.of("OD", "RSPA", "SAT", "GCSM", "GESM", "DSSM")
    t = best_of(lambda: apply_policy(pol, img, Rng(0)), args.repeat)
    print(f"six-function policy on one 32x32 image ({k.BACKEND} backend): {t * 1e3:.3f}ms")


if __name__ == "__main__":
    main()
