"""Benchmark the numba kernels against the pure-numpy fallbacks.

Imports both implementation modules directly (bypassing FCENET_BACKEND) so
one process can time them side by side.  Run:

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from fcenet.backend import HAS_NUMBA
from fcenet.kernels import numpy_impl

if HAS_NUMBA:
    from fcenet.kernels import numba_impl
else:
    numba_impl = None


def _time(fn, args, repeat):
    fn(*args)  # warm-up (numba compiles here)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(rng):
    x = rng.standard_normal((16, 64, 64)).astype(np.float32)
    w = (rng.standard_normal((16, 16, 3, 3)) * 0.1).astype(np.float32)
    b = np.zeros(16, dtype=np.float32)
    g = rng.standard_normal((16, 64, 64)).astype(np.float32)
    dw_w = (rng.standard_normal((16, 1, 3, 3)) * 0.1).astype(np.float32)
    spec = rng.standard_normal((16, 64, 64)) + 1j * rng.standard_normal((16, 64, 64))
    win = np.hanning(11)
    win /= win.sum()
    img = rng.standard_normal((3, 128, 128))
    yield "conv2d_std_fwd      16c 64px", "conv2d_std_fwd", (x, w, b, 1)
    yield "conv2d_std_bwd_in   16c 64px", "conv2d_std_bwd_input", (g, w, 1, 64, 64)
    yield "conv2d_std_bwd_par  16c 64px", "conv2d_std_bwd_params", (g, x, 3, 1)
    yield "conv2d_dw_fwd       16c 64px", "conv2d_dw_fwd", (x, dw_w, b, 1)
    yield "fft2_pow2           16c 64px", "fft2_pow2", (spec, False)
    yield "gauss_blur_valid    3c 128px", "gauss_blur_valid", (img, win)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    rows = []
    for label, name, call_args in _cases(rng):
        t_np = _time(getattr(numpy_impl, name), call_args, args.repeat)
        if numba_impl is not None:
            t_nb = _time(getattr(numba_impl, name), call_args, args.repeat)
            rows.append((label, t_np, t_nb))
        else:
            rows.append((label, t_np, None))
    print(f"{'kernel':<30s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for label, t_np, t_nb in rows:
        if t_nb is None:
            print(f"{label:<30s} {t_np * 1e3:>8.2f}ms {'n/a':>10s} {'':>8s}")
        else:
            print(f"{label:<30s} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms "
                  f"{t_np / t_nb:>7.1f}x")
    if numba_impl is None:
        print("\nnumba not installed; showing numpy fallback only")


if __name__ == "__main__":
    main()
