"""Single- and multi-scale SSIM on glyph images."""

from __future__ import annotations

import numpy as np
from scipy.signal import convolve2d

# standard five-scale exponents; glyphs support only the first three
MS_WEIGHTS = np.array([0.0448, 0.2856, 0.3001, 0.2363, 0.1333])
K1, K2 = 0.01, 0.03


def to_unit(x) -> np.ndarray:
    """[-1, 1] glyph pixels -> float64 in [0, 1]."""
    x = getattr(x, "pixels", x)
    return (np.asarray(x, dtype=np.float64) + 1.0) / 2.0


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    coords = np.arange(size, dtype=np.float64) - size // 2
    g = np.exp(-(coords ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _filter(x, win):
    return convolve2d(x, win, mode="valid")


def ssim_components(a: np.ndarray, b: np.ndarray, win: np.ndarray, data_range: float = 1.0):
    """Mean SSIM and mean contrast-structure term over valid windows."""
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    mu_a, mu_b = _filter(a, win), _filter(b, win)
    var_a = _filter(a * a, win) - mu_a ** 2
    var_b = _filter(b * b, win) - mu_b ** 2
    cov = _filter(a * b, win) - mu_a * mu_b
    cs = (2 * cov + c2) / (var_a + var_b + c2)
    lum = (2 * mu_a * mu_b + c1) / (mu_a ** 2 + mu_b ** 2 + c1)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def ssim(a, b, win_size: int = 11, sigma: float = 1.5) -> float:
    a, b = to_unit(a), to_unit(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return ssim_components(a, b, gaussian_window(win_size, sigma))[0]


def _downsample(x):
    h, w = x.shape[0] // 2 * 2, x.shape[1] // 2 * 2
    x = x[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def ms_ssim(a, b, scales: int = 3, win_size: int = 11, sigma: float = 1.5) -> float:
    """Multi-scale SSIM of two glyphs, in [0, 1].

    Inputs are [-1, 1] glyph arrays and are rescaled to [0, 1]. The standard
    exponents are truncated to ``scales`` and renormalized; negative
    per-scale terms are clipped to zero.
    """
    a, b = to_unit(a), to_unit(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < win_size * 2 ** (scales - 1):
        raise ValueError(f"image {a.shape} too small for {scales} scales with a {win_size}px window")
    weights = MS_WEIGHTS[:scales] / MS_WEIGHTS[:scales].sum()
    win = gaussian_window(win_size, sigma)
    out = 1.0
    for i, w in enumerate(weights):
        s, cs = ssim_components(a, b, win)
        term = s if i == scales - 1 else cs
        out *= max(term, 0.0) ** w
        a, b = _downsample(a), _downsample(b)
    return float(min(out, 1.0))
