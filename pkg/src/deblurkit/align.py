"""Translation registration by phase correlation and wavelet pre-denoising.

Registration is restricted to integer translations: refocused microscope
frames of one region are dominantly shifted copies, and the translation model
keeps kernel estimation free of resampling artifacts. Denoising is an
orthonormal Haar transform with soft thresholding (VisuShrink).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import as_image, check_same_shape

_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class Shift:
    """Integer translation (dy, dx) with the correlation-peak confidence."""

    dy: int
    dx: int
    confidence: float


def register_translation(fixed, moving) -> Shift:
    """Recover the translation taking ``fixed`` onto ``moving``.

    The shift is the argmax of the inverse transform of the normalized
    cross-power spectrum, unwrapped to signed offsets; applying
    ``(-dy, -dx)`` to ``moving`` re-aligns it with ``fixed``.
    """
    fixed = as_image(fixed, "fixed")
    moving = as_image(moving, "moving")
    check_same_shape(fixed, moving)
    if fixed.max() == fixed.min() or moving.max() == moving.min():
        raise ValueError("cannot register constant images (undefined spectrum)")
    h, w = fixed.shape
    f_fixed = np.fft.fft2(fixed)
    f_moving = np.fft.fft2(moving)
    cross = f_moving * np.conj(f_fixed)
    mag = np.abs(cross)
    # Terms with zero magnitude carry no phase information; drop them.
    spectrum = np.where(mag > 0, cross / np.where(mag > 0, mag, 1.0), 0.0)
    surface = np.real(np.fft.ifft2(spectrum))
    peak = np.unravel_index(np.argmax(surface), surface.shape)
    dy = int(peak[0]) if peak[0] <= h // 2 else int(peak[0]) - h
    dx = int(peak[1]) if peak[1] <= w // 2 else int(peak[1]) - w
    confidence = float(np.clip(surface[peak], 0.0, 1.0))
    return Shift(dy, dx, confidence)


def apply_translation(img, shift: Shift) -> np.ndarray:
    """Translate by (dy, dx), filling exposed pixels by edge replication."""
    img = as_image(img)
    h, w = img.shape
    if abs(shift.dy) >= h or abs(shift.dx) >= w:
        raise ValueError(f"shift ({shift.dy}, {shift.dx}) out of range for {img.shape}")
    rows = np.clip(np.arange(h) - shift.dy, 0, h - 1)
    cols = np.clip(np.arange(w) - shift.dx, 0, w - 1)
    return img[np.ix_(rows, cols)]


# --- Haar wavelet transform --------------------------------------------------

def _haar_step_axis(x: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray, int]:
    """One analysis level along ``axis``; odd lengths extend symmetrically."""
    n = x.shape[axis]
    if n % 2 == 1:
        last = np.take(x, [-1], axis=axis)
        x = np.concatenate([x, last], axis=axis)
    even = np.take(x, range(0, x.shape[axis], 2), axis=axis)
    odd = np.take(x, range(1, x.shape[axis], 2), axis=axis)
    return (even + odd) / _SQRT2, (even - odd) / _SQRT2, n


def _haar_inverse_axis(a: np.ndarray, d: np.ndarray, n: int, axis: int) -> np.ndarray:
    even = (a + d) / _SQRT2
    odd = (a - d) / _SQRT2
    out_shape = list(a.shape)
    out_shape[axis] = 2 * a.shape[axis]
    out = np.empty(out_shape, dtype=np.float64)
    sl_even = [slice(None)] * out.ndim
    sl_even[axis] = slice(0, None, 2)
    sl_odd = [slice(None)] * out.ndim
    sl_odd[axis] = slice(1, None, 2)
    out[tuple(sl_even)] = even
    out[tuple(sl_odd)] = odd
    sl_trunc = [slice(None)] * out.ndim
    sl_trunc[axis] = slice(0, n)
    return out[tuple(sl_trunc)]


def haar_forward(img: np.ndarray, levels: int):
    """Multi-level 2D Haar analysis.

    Returns ``(approx, details)`` where ``details`` is a list from finest to
    coarsest of ``(cH, cV, cD, (rows, cols))`` with the pre-transform shape
    needed for exact inversion.
    """
    x = np.asarray(img, dtype=np.float64)
    details = []
    for _ in range(levels):
        rows = x.shape[0]
        a_r, d_r, _ = _haar_step_axis(x, axis=0)
        cols = x.shape[1]
        a, cv = _haar_step_axis(a_r, axis=1)[:2]
        ch, cd = _haar_step_axis(d_r, axis=1)[:2]
        details.append((ch, cv, cd, (rows, cols)))
        x = a
    return x, details


def haar_inverse(approx: np.ndarray, details) -> np.ndarray:
    x = approx
    for ch, cv, cd, (rows, cols) in reversed(details):
        a_r = _haar_inverse_axis(x, cv, cols, axis=1)
        d_r = _haar_inverse_axis(ch, cd, cols, axis=1)
        x = _haar_inverse_axis(a_r, d_r, rows, axis=0)
    return x


def _soft_threshold(c: np.ndarray, t: float) -> np.ndarray:
    return np.sign(c) * np.maximum(np.abs(c) - t, 0.0)


def wavelet_denoise(img, levels: int = 3, threshold="auto") -> np.ndarray:
    """Haar soft-threshold denoising, clamped back to [0, 1].

    With ``threshold="auto"`` the universal threshold sigma*sqrt(2*ln N) is
    used, estimating sigma as MAD of the finest diagonal band / 0.6745.
    """
    img = as_image(img)
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    if min(img.shape) < 2**levels:
        raise ValueError(
            f"image {img.shape} too small for {levels} decomposition levels"
        )
    approx, details = haar_forward(img, levels)
    if threshold == "auto":
        finest_diag = details[0][2]
        sigma_hat = np.median(np.abs(finest_diag)) / 0.6745
        t = float(sigma_hat * np.sqrt(2.0 * np.log(img.size)))
    else:
        t = float(threshold)
        if t < 0:
            raise ValueError(f"threshold must be >= 0, got {t}")
    shrunk = [
        (_soft_threshold(ch, t), _soft_threshold(cv, t), _soft_threshold(cd, t), shape)
        for ch, cv, cd, shape in details
    ]
    out = haar_inverse(approx, shrunk)
    return np.clip(out, 0.0, 1.0)
