"""PSNR and SSIM on real (magnitude) images."""

from __future__ import annotations

import math

import numpy as np

SSIM_WINDOW = 7
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _as_real_pair(reference, reconstruction):
    ref = np.asarray(reference, dtype=np.float64)
    rec = np.asarray(reconstruction, dtype=np.float64)
    if ref.shape != rec.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {rec.shape}")
    return ref, rec


def psnr(reference: np.ndarray, reconstruction: np.ndarray, peak: float) -> float:
    """10 log10(peak^2 / MSE) in dB; identical images report +inf."""
    ref, rec = _as_real_pair(reference, reconstruction)
    if not peak > 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean(np.square(ref - rec)))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def ssim(reference: np.ndarray, reconstruction: np.ndarray, peak: float) -> float:
    """Mean local SSIM over all fully valid 7x7 uniform windows.

    Constants follow the usual k1=0.01, k2=0.03 convention relative to
    ``peak``; window statistics use the unbiased (n-1) normalization.
    """
    ref, rec = _as_real_pair(reference, reconstruction)
    if not peak > 0:
        raise ValueError("peak must be positive")
    if ref.ndim != 2:
        raise ValueError(f"expected 2-D images, got shape {ref.shape}")
    if min(ref.shape) < SSIM_WINDOW:
        raise ValueError(f"images smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")

    win = SSIM_WINDOW
    n = win * win
    x = np.lib.stride_tricks.sliding_window_view(ref, (win, win))
    y = np.lib.stride_tricks.sliding_window_view(rec, (win, win))
    mu_x = x.mean(axis=(-2, -1))
    mu_y = y.mean(axis=(-2, -1))
    dx = x - mu_x[..., None, None]
    dy = y - mu_y[..., None, None]
    var_x = np.sum(dx * dx, axis=(-2, -1)) / (n - 1)
    var_y = np.sum(dy * dy, axis=(-2, -1)) / (n - 1)
    cov = np.sum(dx * dy, axis=(-2, -1)) / (n - 1)

    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    score = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    )
    return float(score.mean())
