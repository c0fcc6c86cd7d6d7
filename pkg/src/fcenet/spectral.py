"""2D DFTs, frequency filtering, and ideal masks.

Transforms are unnormalized forward / 1/(H·W) inverse, full complex spectrum
with DC at (0,0), over the trailing two axes.  Power-of-two sizes go through
the radix-2 FFT kernels; anything else falls back to the direct matrix
transform.  The two routes are required to agree (cross-checked in tests, not
assumed here).

The Var-level ops at the bottom expose the transforms to the autodiff graph as
real-valued nodes (re/im planes), which keeps the engine real-only.
"""

from functools import lru_cache

import numpy as np

from . import autodiff as ad
from . import kernels


def is_pow2(n):
    return n > 0 and (n & (n - 1)) == 0


@lru_cache(maxsize=32)
def _dft_matrix(n, forward, c128):
    sign = -2j if forward else 2j
    idx = np.arange(n)
    m = np.exp(sign * np.pi * np.outer(idx, idx) / n)
    m = m.astype(np.complex128 if c128 else np.complex64)
    m.setflags(write=False)
    return m


def _complex_dtype(dtype):
    return np.complex64 if np.dtype(dtype) in (np.float32, np.complex64) else np.complex128


def _transform(x, forward):
    """Unnormalized DFT/IDFT over the trailing two axes of a complex array."""
    H, W = x.shape[-2], x.shape[-1]
    if is_pow2(H) and is_pow2(W):
        return kernels.fft2_pow2(np.ascontiguousarray(x), not forward)
    c128 = x.dtype == np.complex128
    fh = _dft_matrix(H, forward, c128)
    fw = _dft_matrix(W, forward, c128)
    return fh @ x @ fw


def dft2d(x):
    """Forward DFT; DC bin = plain pixel sum."""
    x = np.asarray(x)
    return _transform(x.astype(_complex_dtype(x.dtype)), forward=True)


def idft2d(spec, with_residual=False):
    """Inverse DFT with 1/(H·W) scaling, real part.

    For non-Hermitian spectra the imaginary part is discarded; pass
    ``with_residual=True`` to also get its max magnitude as a diagnostic.
    """
    spec = np.asarray(spec)
    H, W = spec.shape[-2], spec.shape[-1]
    z = _transform(spec.astype(_complex_dtype(spec.dtype)), forward=False) / (H * W)
    if with_residual:
        return z.real.copy(), float(np.abs(z.imag).max())
    return z.real.copy()


def apply_filter(spec, gains):
    """Per-bin product of a complex spectrum and real gains ((H,W) or (C,H,W))."""
    spec = np.asarray(spec)
    gains = np.asarray(gains)
    if spec.shape[-2:] != gains.shape[-2:]:
        raise ValueError(f"filter dims {gains.shape[-2:]} != spectrum dims {spec.shape[-2:]}")
    return spec * gains


def radial_freq(height, width):
    """Normalized radial frequency per bin: 0 at DC, 1 at the spectrum corner."""
    fu = ((np.arange(height) + height // 2) % height - height // 2) / (height / 2)
    fv = ((np.arange(width) + width // 2) % width - width // 2) / (width / 2)
    return np.sqrt(fu[:, None] ** 2 + fv[None, :] ** 2) / np.sqrt(2.0)


def ideal_high_pass(height, width, cutoff):
    """Binary mask: 0 where normalized radial frequency r <= cutoff, else 1.

    r is computed on signed centered frequencies, scaled so the spectrum
    corner has r = 1; DC has r = 0 and is blocked for every valid cutoff.
    """
    if not 0.0 <= cutoff <= 1.0:
        raise ValueError("cutoff must lie in [0, 1]")
    return (radial_freq(height, width) > cutoff).astype(np.float64)


def ideal_low_pass(height, width, cutoff):
    """Exact bit-complement of ideal_high_pass at the same cutoff."""
    return 1.0 - ideal_high_pass(height, width, cutoff)


# ---------------------------------------------------------------------------
# autodiff bridge
#
# The graph stays real-valued: a spectrum is carried as an (re, im) pair of
# Vars.  Adjoints follow from F being symmetric with F^{-1} = conj(F)/N:
#   x -> Re(Fx):   g -> Re(Fg)         x -> Im(Fx):   g -> Im(Fg)
#   (zr, zi) -> Re(F^{-1}(zr + i zi)): g -> (Re(Fg)/N, Im(Fg)/N)


def dft_pair(x):
    """Var (…,H,W) real -> (re, im) Vars of its forward DFT (one transform)."""
    z = _transform(x.data.astype(_complex_dtype(x.data.dtype)), forward=True)

    def bwd_re(g):
        return (_transform(g.astype(z.dtype), forward=True).real.copy(),)

    def bwd_im(g):
        return (_transform(g.astype(z.dtype), forward=True).imag.copy(),)

    re = ad.node(z.real.copy(), (x,), bwd_re)
    im = ad.node(z.imag.copy(), (x,), bwd_im)
    return re, im


def re_idft_pair(zr, zi):
    """Real part of the inverse DFT of the spectrum zr + i·zi (Vars)."""
    H, W = zr.data.shape[-2], zr.data.shape[-1]
    n = H * W
    z = zr.data + 1j * zi.data
    out = (_transform(z, forward=False) / n).real.copy()

    def bwd(g):
        gz = _transform(g.astype(z.dtype), forward=True)
        return (gz.real / n, gz.imag / n)

    return ad.node(out, (zr, zi), bwd)


def spectral_filter(x, gains):
    """IDFT(DFT(x) ⊙ gains) with real Var gains — differentiable in both."""
    re, im = dft_pair(x)
    return re_idft_pair(re * gains, im * gains)
