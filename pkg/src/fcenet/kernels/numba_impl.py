"""Numba ``@njit`` implementations of the hot kernels.

Single-threaded by design: deterministic summation order is part of the
replay-determinism contract, so no ``prange`` here.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def conv2d_std_fwd(x, w, b, stride):
    cin, H, W = x.shape
    cout = w.shape[0]
    k = w.shape[2]
    p = (k - 1) // 2
    Ho = H // stride
    Wo = W // stride
    out = np.empty((cout, Ho, Wo), x.dtype)
    for co in range(cout):
        for oy in range(Ho):
            ybase = oy * stride - p
            for ox in range(Wo):
                xbase = ox * stride - p
                acc = b[co]
                for ci in range(cin):
                    for ky in range(k):
                        y = ybase + ky
                        if y < 0 or y >= H:
                            continue
                        for kx in range(k):
                            xx = xbase + kx
                            if 0 <= xx < W:
                                acc += w[co, ci, ky, kx] * x[ci, y, xx]
                out[co, oy, ox] = acc
    return out


@njit(cache=True)
def conv2d_std_bwd_input(g, w, stride, H, W):
    cout, Ho, Wo = g.shape
    cin = w.shape[1]
    k = w.shape[2]
    p = (k - 1) // 2
    gx = np.zeros((cin, H, W), g.dtype)
    for co in range(cout):
        for oy in range(Ho):
            ybase = oy * stride - p
            for ox in range(Wo):
                xbase = ox * stride - p
                g0 = g[co, oy, ox]
                for ci in range(cin):
                    for ky in range(k):
                        y = ybase + ky
                        if y < 0 or y >= H:
                            continue
                        for kx in range(k):
                            xx = xbase + kx
                            if 0 <= xx < W:
                                gx[ci, y, xx] += w[co, ci, ky, kx] * g0
    return gx


@njit(cache=True)
def conv2d_std_bwd_params(g, x, kernel, stride):
    cin, H, W = x.shape
    cout, Ho, Wo = g.shape
    k = kernel
    p = (k - 1) // 2
    gw = np.zeros((cout, cin, k, k), g.dtype)
    gb = np.zeros(cout, g.dtype)
    for co in range(cout):
        for oy in range(Ho):
            ybase = oy * stride - p
            for ox in range(Wo):
                xbase = ox * stride - p
                g0 = g[co, oy, ox]
                gb[co] += g0
                for ci in range(cin):
                    for ky in range(k):
                        y = ybase + ky
                        if y < 0 or y >= H:
                            continue
                        for kx in range(k):
                            xx = xbase + kx
                            if 0 <= xx < W:
                                gw[co, ci, ky, kx] += g0 * x[ci, y, xx]
    return gw, gb


@njit(cache=True)
def conv2d_dw_fwd(x, w, b, stride):
    c, H, W = x.shape
    k = w.shape[2]
    p = (k - 1) // 2
    Ho = H // stride
    Wo = W // stride
    out = np.empty((c, Ho, Wo), x.dtype)
    for ci in range(c):
        for oy in range(Ho):
            ybase = oy * stride - p
            for ox in range(Wo):
                xbase = ox * stride - p
                acc = b[ci]
                for ky in range(k):
                    y = ybase + ky
                    if y < 0 or y >= H:
                        continue
                    for kx in range(k):
                        xx = xbase + kx
                        if 0 <= xx < W:
                            acc += w[ci, 0, ky, kx] * x[ci, y, xx]
                out[ci, oy, ox] = acc
    return out


@njit(cache=True)
def conv2d_dw_bwd_input(g, w, stride, H, W):
    c, Ho, Wo = g.shape
    k = w.shape[2]
    p = (k - 1) // 2
    gx = np.zeros((c, H, W), g.dtype)
    for ci in range(c):
        for oy in range(Ho):
            ybase = oy * stride - p
            for ox in range(Wo):
                xbase = ox * stride - p
                g0 = g[ci, oy, ox]
                for ky in range(k):
                    y = ybase + ky
                    if y < 0 or y >= H:
                        continue
                    for kx in range(k):
                        xx = xbase + kx
                        if 0 <= xx < W:
                            gx[ci, y, xx] += w[ci, 0, ky, kx] * g0
    return gx


@njit(cache=True)
def conv2d_dw_bwd_params(g, x, kernel, stride):
    c, H, W = x.shape
    Ho, Wo = g.shape[1], g.shape[2]
    k = kernel
    p = (k - 1) // 2
    gw = np.zeros((c, 1, k, k), g.dtype)
    gb = np.zeros(c, g.dtype)
    for ci in range(c):
        for oy in range(Ho):
            ybase = oy * stride - p
            for ox in range(Wo):
                xbase = ox * stride - p
                g0 = g[ci, oy, ox]
                gb[ci] += g0
                for ky in range(k):
                    y = ybase + ky
                    if y < 0 or y >= H:
                        continue
                    for kx in range(k):
                        xx = xbase + kx
                        if 0 <= xx < W:
                            gw[ci, 0, ky, kx] += g0 * x[ci, y, xx]
    return gw, gb


@njit(cache=True)
def _fft_rows_inplace(a, invert):
    M, N = a.shape
    if N == 1:
        return
    # bit-reversal permutation
    j = 0
    for i in range(1, N):
        bit = N >> 1
        while j & bit:
            j ^= bit
            bit >>= 1
        j |= bit
        if i < j:
            for m in range(M):
                tmp = a[m, i]
                a[m, i] = a[m, j]
                a[m, j] = tmp
    sign = 1.0 if invert else -1.0
    size = 2
    while size <= N:
        half = size >> 1
        ang = sign * 2.0 * np.pi / size
        tw = np.empty(half, a.dtype)
        for t in range(half):
            tw[t] = complex(np.cos(ang * t), np.sin(ang * t))
        for m in range(M):
            for start in range(0, N, size):
                for t in range(half):
                    u = a[m, start + t]
                    v = a[m, start + half + t] * tw[t]
                    a[m, start + t] = u + v
                    a[m, start + half + t] = u - v
        size <<= 1


def fft2_pow2(x, invert):
    """2D FFT over the trailing two axes of a complex array (pow-2 dims)."""
    shape = x.shape
    H, W = shape[-2], shape[-1]
    a = np.ascontiguousarray(x).reshape(-1, W).copy()
    _fft_rows_inplace(a, invert)
    a = np.ascontiguousarray(a.reshape(shape).swapaxes(-1, -2)).reshape(-1, H)
    _fft_rows_inplace(a, invert)
    return a.reshape(shape[:-2] + (W, H)).swapaxes(-1, -2)


@njit(cache=True)
def gauss_blur_valid(x, w):
    C, H, W = x.shape
    win = w.shape[0]
    Ho = H - win + 1
    Wo = W - win + 1
    tmp = np.empty((C, H, Wo), x.dtype)
    for c in range(C):
        for y in range(H):
            for ox in range(Wo):
                acc = 0.0
                for t in range(win):
                    acc += x[c, y, ox + t] * w[t]
                tmp[c, y, ox] = acc
    out = np.empty((C, Ho, Wo), x.dtype)
    for c in range(C):
        for oy in range(Ho):
            for ox in range(Wo):
                acc = 0.0
                for t in range(win):
                    acc += tmp[c, oy + t, ox] * w[t]
                out[c, oy, ox] = acc
    return out
