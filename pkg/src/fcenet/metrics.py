"""PSNR and SSIM.

SSIM follows the reference single-scale formulation: Gaussian-weighted local
moments over valid window positions, luminance/contrast/structure product,
mean over positions and channels.  Both metrics compute in float64 regardless
of input dtype.
"""

import numpy as np

from . import kernels

PSNR_CAP_DB = 100.0


class SsimParams:
    def __init__(self, window=11, sigma=1.5, k1=0.01, k2=0.03, peak=1.0):
        if window % 2 == 0 or window < 3:
            raise ValueError("window must be odd and >= 3")
        if sigma <= 0 or k1 <= 0 or k2 <= 0:
            raise ValueError("sigma, k1, k2 must be positive")
        self.window = window
        self.sigma = sigma
        self.k1 = k1
        self.k2 = k2
        self.peak = peak


def _gauss_window(window, sigma):
    t = np.arange(window, dtype=np.float64) - (window - 1) / 2.0
    w = np.exp(-0.5 * (t / sigma) ** 2)
    return w / w.sum()


def psnr(a, b, peak=1.0):
    """10·log10(peak²/MSE), capped at 100 dB for identical inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(peak * peak / mse))


def ssim(a, b, params=None):
    """Mean SSIM over valid window positions and channels."""
    if params is None:
        params = SsimParams()
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[None], b[None]
    H, W = a.shape[-2], a.shape[-1]
    if H < params.window or W < params.window:
        raise ValueError("image smaller than SSIM window")
    w = _gauss_window(params.window, params.sigma)
    c1 = (params.k1 * params.peak) ** 2
    c2 = (params.k2 * params.peak) ** 2
    mu_a = kernels.gauss_blur_valid(a, w)
    mu_b = kernels.gauss_blur_valid(b, w)
    var_a = kernels.gauss_blur_valid(a * a, w) - mu_a * mu_a
    var_b = kernels.gauss_blur_valid(b * b, w) - mu_b * mu_b
    cov = kernels.gauss_blur_valid(a * b, w) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
