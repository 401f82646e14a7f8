"""Input validation helpers shared across the toolkit.

Images are 2D float arrays with intensities in [0, 1]; blur kernels are
odd-sided, non-negative 2D arrays summing to 1.
"""

from __future__ import annotations

import numpy as np

KERNEL_SIDE_MIN = 3
KERNEL_SIDE_MAX = 151
KERNEL_SUM_TOL = 1e-9


def as_image(arr, name: str = "image") -> np.ndarray:
    """Coerce ``arr`` to a validated 2D float64 image in [0, 1]."""
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"{name} must be 2D, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"{name} must have height and width >= 1")
    if not np.all(np.isfinite(img)):
        raise ValueError(f"{name} contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError(
            f"{name} intensities must lie in [0, 1], "
            f"got range [{img.min():.6g}, {img.max():.6g}]"
        )
    return img


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "images") -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what} must have equal dimensions: {a.shape} vs {b.shape}")


def check_kernel_taps(taps, name: str = "kernel") -> np.ndarray:
    """Validate kernel taps: square, odd side in [3, 151], taps >= 0, sum 1."""
    t = np.asarray(taps, dtype=np.float64)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ValueError(f"{name} taps must be square 2D, got shape {t.shape}")
    side = t.shape[0]
    if side % 2 == 0:
        raise ValueError(f"{name} side must be odd, got {side}")
    if not KERNEL_SIDE_MIN <= side <= KERNEL_SIDE_MAX:
        raise ValueError(
            f"{name} side must be in [{KERNEL_SIDE_MIN}, {KERNEL_SIDE_MAX}], got {side}"
        )
    if not np.all(np.isfinite(t)):
        raise ValueError(f"{name} contains non-finite taps")
    if t.min() < 0.0:
        raise ValueError(f"{name} taps must be non-negative, min is {t.min():.6g}")
    s = t.sum()
    if abs(s - 1.0) > KERNEL_SUM_TOL:
        raise ValueError(f"{name} taps must sum to 1 within {KERNEL_SUM_TOL}, got {s!r}")
    return t


def check_tensor4(x, name: str = "tensor") -> np.ndarray:
    """Validate a (batch, channels, height, width) activation tensor."""
    t = np.asarray(x)
    if t.ndim != 4:
        raise ValueError(f"{name} must be 4D (batch, channels, height, width), got {t.shape}")
    if min(t.shape) < 1:
        raise ValueError(f"{name} dims must all be >= 1, got {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ValueError(f"{name} contains non-finite values")
    return t


def quantize_u8(img: np.ndarray) -> np.ndarray:
    """Map [0, 1] intensities to uint8 bytes, rounding halves up."""
    return np.floor(np.asarray(img, dtype=np.float64) * 255.0 + 0.5).astype(np.uint8)
