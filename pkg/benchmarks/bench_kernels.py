"""Compare the compiled and pure-numpy scattered-point kernels.

Usage: ``python3 benchmarks/bench_kernels.py [--points M] [--K K] [--comp C]``.
Prints the best-of-``repeat`` wall time of each backend, the speedup and the
largest difference between the two results.
"""

import argparse
import timeit

import numpy as np

from artifact import _kernels_py

try:
    from artifact import _kernels
except ImportError:  # pragma: no cover - pure-python install
    _kernels = None


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--points", type=int, default=16**3)
    ap.add_argument("--K", type=int, default=2)
    ap.add_argument("--comp", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    a = ap.parse_args()
    rng = np.random.default_rng(0)
    W = 2 * a.K + 1
    coef = rng.standard_normal((a.comp, W, W, W)) + 1j * rng.standard_normal((a.comp, W, W, W))
    pts = rng.random((a.points, 3))
    impls = {"python": _kernels_py.eval_band_limited}
    if _kernels is not None:
        impls["cython"] = _kernels.eval_band_limited
    out, times = {}, {}
    for name, f in impls.items():
        out[name] = f(coef, pts, True)
        times[name] = min(timeit.repeat(lambda f=f: f(coef, pts, True), number=1, repeat=a.repeat))
        print(f"{name:7s} {times[name] * 1e3:9.2f} ms  ({a.points} points, K={a.K}, {a.comp} components)")
    if "cython" in out:
        dv = np.abs(out["cython"][0] - out["python"][0]).max()
        dg = np.abs(out["cython"][1] - out["python"][1]).max()
        print(f"speedup {times['python'] / times['cython']:.2f}x; max |diff| values {dv:.2e}, gradients {dg:.2e}")
    else:
        print("compiled kernel not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
