"""Shared synthetic image builders for the test suite."""

import numpy as np
import pytest
from scipy.signal import fftconvolve


def make_texture(seed: int, size: int = 128, smooth: float = 1.5) -> np.ndarray:
    """Seeded band-limited texture in [0.05, 0.95] with margin cropped off."""
    rng = np.random.default_rng(seed)
    pad = 16
    base = rng.random((size + 2 * pad, size + 2 * pad))
    g = np.exp(-0.5 * (np.arange(-12, 13) / smooth) ** 2)
    g /= g.sum()
    sm = fftconvolve(fftconvolve(base, g[:, None], mode="same"), g[None, :], mode="same")
    sm = sm[pad : pad + size, pad : pad + size]
    lo, hi = sm.min(), sm.max()
    return 0.05 + 0.9 * (sm - lo) / (hi - lo)


def make_blobs(seed: int, size: int = 64, n_blobs: int = 3, width: float = 2.0) -> np.ndarray:
    """Sparse Gaussian bumps on a flat background, microscopy-feature style."""
    rng = np.random.default_rng(seed)
    img = np.zeros((size, size))
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(n_blobs):
        cy, cx = rng.uniform(8, size - 8, 2)
        amp = rng.uniform(0.4, 0.9)
        img += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width**2))
    return np.clip(0.08 + img, 0.0, 1.0)


@pytest.fixture
def texture64():
    return make_texture(7, size=64)


@pytest.fixture
def texture128():
    return make_texture(3, size=128)
