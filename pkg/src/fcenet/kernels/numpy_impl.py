"""Pure-numpy implementations of the hot kernels.

Convolutions decompose into k*k shifted BLAS products; the radix-2 FFT is an
iterative Cooley-Tukey with butterflies vectorized across rows.  Semantics are
identical to the numba kernels (same signatures, same math), but summation
order may differ in the last ulps.
"""

from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_std_fwd(x, w, b, stride):
    """Standard 2D convolution, zero padding (k-1)//2, groups=1.

    x: (Cin,H,W), w: (Cout,Cin,k,k), b: (Cout,) -> (Cout,H/s,W/s)
    """
    cin, H, W = x.shape
    cout, _, k, _ = w.shape
    p = (k - 1) // 2
    s = stride
    Ho, Wo = H // s, W // s
    xp = np.pad(x, ((0, 0), (p, p), (p, p)))
    out = np.empty((cout, Ho, Wo), dtype=x.dtype)
    out[:] = b[:, None, None]
    for ky in range(k):
        for kx in range(k):
            xs = xp[:, ky:ky + s * Ho:s, kx:kx + s * Wo:s]
            out += np.tensordot(w[:, :, ky, kx], xs, axes=([1], [0]))
    return out


def conv2d_std_bwd_input(g, w, stride, H, W):
    """Gradient of conv2d_std_fwd w.r.t. its input."""
    cout, Ho, Wo = g.shape
    cin = w.shape[1]
    k = w.shape[2]
    p = (k - 1) // 2
    s = stride
    gxp = np.zeros((cin, H + 2 * p, W + 2 * p), dtype=g.dtype)
    for ky in range(k):
        for kx in range(k):
            gxp[:, ky:ky + s * Ho:s, kx:kx + s * Wo:s] += np.tensordot(
                w[:, :, ky, kx], g, axes=([0], [0]))
    return gxp[:, p:p + H, p:p + W]


def conv2d_std_bwd_params(g, x, kernel, stride):
    """Gradients of conv2d_std_fwd w.r.t. weight and bias."""
    cin, H, W = x.shape
    cout, Ho, Wo = g.shape
    k = kernel
    p = (k - 1) // 2
    s = stride
    xp = np.pad(x, ((0, 0), (p, p), (p, p)))
    gw = np.empty((cout, cin, k, k), dtype=g.dtype)
    gf = g.reshape(cout, -1)
    for ky in range(k):
        for kx in range(k):
            xs = xp[:, ky:ky + s * Ho:s, kx:kx + s * Wo:s].reshape(cin, -1)
            gw[:, :, ky, kx] = gf @ xs.T
    gb = g.sum(axis=(1, 2))
    return gw, gb


def conv2d_dw_fwd(x, w, b, stride):
    """Depthwise 2D convolution. x: (C,H,W), w: (C,1,k,k), b: (C,)."""
    c, H, W = x.shape
    k = w.shape[2]
    p = (k - 1) // 2
    s = stride
    Ho, Wo = H // s, W // s
    xp = np.pad(x, ((0, 0), (p, p), (p, p)))
    out = np.empty((c, Ho, Wo), dtype=x.dtype)
    out[:] = b[:, None, None]
    for ky in range(k):
        for kx in range(k):
            out += w[:, 0, ky, kx][:, None, None] * xp[:, ky:ky + s * Ho:s, kx:kx + s * Wo:s]
    return out


def conv2d_dw_bwd_input(g, w, stride, H, W):
    c, Ho, Wo = g.shape
    k = w.shape[2]
    p = (k - 1) // 2
    s = stride
    gxp = np.zeros((c, H + 2 * p, W + 2 * p), dtype=g.dtype)
    for ky in range(k):
        for kx in range(k):
            gxp[:, ky:ky + s * Ho:s, kx:kx + s * Wo:s] += w[:, 0, ky, kx][:, None, None] * g
    return gxp[:, p:p + H, p:p + W]


def conv2d_dw_bwd_params(g, x, kernel, stride):
    c, H, W = x.shape
    Ho, Wo = g.shape[1], g.shape[2]
    k = kernel
    p = (k - 1) // 2
    s = stride
    xp = np.pad(x, ((0, 0), (p, p), (p, p)))
    gw = np.empty((c, 1, k, k), dtype=g.dtype)
    for ky in range(k):
        for kx in range(k):
            xs = xp[:, ky:ky + s * Ho:s, kx:kx + s * Wo:s]
            gw[:, 0, ky, kx] = (g * xs).sum(axis=(1, 2))
    gb = g.sum(axis=(1, 2))
    return gw, gb


@lru_cache(maxsize=32)
def _bitrev_indices(n):
    idx = np.zeros(n, dtype=np.int64)
    bits = n.bit_length() - 1
    for i in range(n):
        r = 0
        v = i
        for _ in range(bits):
            r = (r << 1) | (v & 1)
            v >>= 1
        idx[i] = r
    idx.setflags(write=False)
    return idx


def _fft_rows(a, invert):
    """Radix-2 FFT of every row of a (M,N) complex array; N a power of two.

    Unnormalized in both directions; callers apply 1/N scaling for inverses.
    """
    M, N = a.shape
    if N == 1:
        return a.copy()
    out = a[:, _bitrev_indices(N)].copy()
    sign = 1.0 if invert else -1.0
    size = 2
    while size <= N:
        half = size // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / size).astype(a.dtype)
        v = out.reshape(M, N // size, size)
        odd = v[:, :, half:] * tw
        even = v[:, :, :half].copy()
        v[:, :, :half] = even + odd
        v[:, :, half:] = even - odd
        size *= 2
    return out


def fft2_pow2(x, invert):
    """2D FFT over the trailing two axes of a complex array (pow-2 dims)."""
    shape = x.shape
    H, W = shape[-2], shape[-1]
    a = _fft_rows(np.ascontiguousarray(x).reshape(-1, W), invert)
    a = a.reshape(shape).swapaxes(-1, -2)
    a = _fft_rows(np.ascontiguousarray(a).reshape(-1, H), invert)
    return a.reshape(shape[:-2] + (W, H)).swapaxes(-1, -2)


def gauss_blur_valid(x, w):
    """Separable window correlation, valid mode. x: (C,H,W), w: (win,)."""
    tmp = sliding_window_view(x, w.shape[0], axis=2) @ w
    return sliding_window_view(tmp, w.shape[0], axis=1) @ w
