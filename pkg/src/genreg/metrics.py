"""PSNR and SSIM for grayscale reconstructions."""

import numpy as np
from scipy.signal import correlate

from .core import ShapeError


def psnr(u, ref, peak=1.0):
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    u = np.asarray(u, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if u.shape != ref.shape:
        raise ShapeError(f"shape mismatch {u.shape} vs {ref.shape}")
    if peak <= 0:
        raise ValueError("peak must be > 0")
    mse = float(np.mean((u - ref) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


def _gaussian_window(size, sigma):
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-0.5 * (x / sigma) ** 2)
    w = np.outer(g, g)
    return w / w.sum()


def ssim(u, ref, peak=1.0, window=8, sigma=1.5):
    """Mean structural similarity over all valid ``window x window`` patches."""
    u = np.asarray(u, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if u.shape != ref.shape:
        raise ShapeError(f"shape mismatch {u.shape} vs {ref.shape}")
    if min(u.shape) < window:
        raise ShapeError(f"images smaller than the {window}x{window} window")
    w = _gaussian_window(window, sigma)

    def filt(a):
        return correlate(a, w, mode="valid", method="direct")

    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mu_u, mu_r = filt(u), filt(ref)
    var_u = filt(u * u) - mu_u**2
    var_r = filt(ref * ref) - mu_r**2
    cov = filt(u * ref) - mu_u * mu_r
    num = (2 * mu_u * mu_r + c1) * (2 * cov + c2)
    den = (mu_u**2 + mu_r**2 + c1) * (var_u + var_r + c2)
    return float(np.mean(num / den))


def format_metric(x):
    """JSON-friendly value: ``"inf"`` for infinite, ``None`` for missing."""
    if x is None:
        return None
    return "inf" if np.isinf(x) else float(x)
