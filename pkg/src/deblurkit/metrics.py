"""Image fidelity metrics: MSE, PSNR, and windowed SSIM.

All three take 2D float images on a declared data range (default [0, 1]).
PSNR of a perfect match is the +inf sentinel rather than an error, so
callers can format or sort scores without special-casing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve

from .validation import as_image, check_same_shape


def mse(a, b) -> float:
    a = as_image(a, "a")
    b = as_image(b, "b")
    check_same_shape(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, max_value: float = 1.0) -> float:
    """10 * log10(max² / mse), in dB; identical images give float('inf')."""
    if max_value <= 0:
        raise ValueError(f"max_value must be > 0, got {max_value}")
    err = mse(a, b)
    if err == 0.0:
        return float("inf")
    return float(10.0 * np.log10(max_value * max_value / err))


@dataclass(frozen=True)
class SsimConfig:
    window_size: int = 11
    sigma: float = 1.5
    data_range: float = 1.0
    k1: float = 0.01
    k2: float = 0.03

    def __post_init__(self):
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise ValueError(f"window_size must be odd and >= 3, got {self.window_size}")
        if self.sigma <= 0 or self.data_range <= 0:
            raise ValueError("sigma and data_range must be > 0")


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma * sigma))
    return g / g.sum()


def _window_mean(img: np.ndarray, w: np.ndarray) -> np.ndarray:
    # Separable valid-mode weighting; the window is symmetric so convolution
    # and correlation coincide.
    tmp = convolve(img, w[None, :], mode="valid", method="direct")
    return convolve(tmp, w[:, None], mode="valid", method="direct")


def ssim(a, b, config: SsimConfig | None = None) -> float:
    """Mean structural similarity over all fully-valid Gaussian windows."""
    cfg = config or SsimConfig()
    a = as_image(a, "a")
    b = as_image(b, "b")
    check_same_shape(a, b)
    if min(a.shape) < cfg.window_size:
        raise ValueError(
            f"images {a.shape} smaller than the {cfg.window_size}x{cfg.window_size} window"
        )
    w = _gaussian_window(cfg.window_size, cfg.sigma)
    mu_a = _window_mean(a, w)
    mu_b = _window_mean(b, w)
    e_aa = _window_mean(a * a, w)
    e_bb = _window_mean(b * b, w)
    e_ab = _window_mean(a * b, w)
    var_a = e_aa - mu_a * mu_a
    var_b = e_bb - mu_b * mu_b
    cov = e_ab - mu_a * mu_b
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
