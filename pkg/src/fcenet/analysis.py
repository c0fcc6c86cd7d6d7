"""Cross-field frequency-correlation analysis.

For a target/reference image pair, sweep an ideal high-pass cutoff, inverse
transform each filtered spectrum, and score the two band-limited images with
SSIM.  Noisy targets lose similarity as the band narrows to high frequencies;
targets sharing high-frequency structure with the reference gain it.
"""

import numpy as np
from scipy import stats

from . import metrics, spectral

# degenerate endpoints (empty/full band) excluded by construction
CUTOFF_GRID = np.round(np.arange(1, 13) * 0.05, 2)


class CorrelationCurve:
    def __init__(self, cutoffs, similarities, label):
        cutoffs = np.asarray(cutoffs, dtype=np.float64)
        similarities = np.asarray(similarities, dtype=np.float64)
        if cutoffs.shape != similarities.shape or cutoffs.ndim != 1:
            raise ValueError("cutoffs and similarities must be equal-length 1D")
        if np.any(np.diff(cutoffs) <= 0):
            raise ValueError("cutoffs must be strictly increasing")
        if np.any(np.abs(similarities) > 1.0 + 1e-12):
            raise ValueError("similarities must lie in [-1, 1]")
        self.cutoffs = cutoffs
        self.similarities = similarities
        self.label = label


def luminance(img):
    """(C,H,W) -> (1,H,W) channel mean; pass-through for single-channel."""
    img = np.asarray(img)
    if img.shape[0] == 1:
        return img
    return img.mean(axis=0, keepdims=True)


def band_similarity(target, gt, cutoff):
    """SSIM between the high-pass bands of target and gt at one cutoff."""
    target = np.asarray(target, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if target.shape != gt.shape:
        raise ValueError(f"shape mismatch {target.shape} vs {gt.shape}")
    gains = spectral.ideal_high_pass(target.shape[-2], target.shape[-1], cutoff)
    ft = spectral.idft2d(spectral.apply_filter(spectral.dft2d(target), gains))
    fg = spectral.idft2d(spectral.apply_filter(spectral.dft2d(gt), gains))
    return metrics.ssim(ft, fg)


def correlation_curve(target, gt, cutoffs=None, label=""):
    if cutoffs is None:
        cutoffs = CUTOFF_GRID
    cutoffs = np.asarray(cutoffs, dtype=np.float64)
    if np.any(np.diff(cutoffs) <= 0):
        raise ValueError("cutoffs must be strictly increasing")
    sims = [band_similarity(target, gt, c) for c in cutoffs]
    return CorrelationCurve(cutoffs, sims, label)


def spearman(curve):
    """Spearman rank correlation of similarity against cutoff."""
    rho, _ = stats.spearmanr(curve.cutoffs, curve.similarities)
    return float(rho)


def export_curve_csv(curves, path):
    """Write curves sharing one cutoff grid as CSV (6 decimal places)."""
    if not curves:
        raise ValueError("no curves to export")
    grid = curves[0].cutoffs
    for c in curves[1:]:
        if not np.array_equal(c.cutoffs, grid):
            raise ValueError("curves have mismatched cutoff grids")
    lines = ["cutoff," + ",".join(c.label for c in curves)]
    for i, x in enumerate(grid):
        row = [f"{x:.6f}"] + [f"{c.similarities[i]:.6f}" for c in curves]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
