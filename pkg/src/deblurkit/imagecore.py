"""Image I/O, dihedral augmentation, patch extraction/stitching, histogram stretch.

All functions are pure; images are 2D float64 arrays in [0, 1] (see
:mod:`deblurkit.validation`), 8-bit outputs are uint8 arrays.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage

from .validation import as_image, quantize_u8

LUMINANCE_WEIGHTS = (0.299, 0.587, 0.114)

# Floor keeps border pixels covered by a single patch well-defined.
STITCH_WEIGHT_FLOOR = 1e-3


def load_image(path) -> np.ndarray:
    """Load an 8-bit grayscale or RGB raster (PNG/PGM/PPM) as a [0, 1] image.

    RGB inputs are reduced with luminance weights 0.299/0.587/0.114.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"image file not found: {path}")
    try:
        with PILImage.open(path) as im:
            mode = im.mode
            if mode == "L":
                data = np.asarray(im, dtype=np.float64) / 255.0
            elif mode == "RGB":
                rgb = np.asarray(im, dtype=np.float64) / 255.0
                w = LUMINANCE_WEIGHTS
                data = w[0] * rgb[..., 0] + w[1] * rgb[..., 1] + w[2] * rgb[..., 2]
            else:
                raise ValueError(
                    f"unsupported raster mode {mode!r} in {path}: "
                    "expected 8-bit grayscale or 8-bit RGB"
                )
    except ValueError:
        raise
    except Exception as exc:  # Pillow raises format-specific errors
        raise ValueError(f"cannot decode raster {path}: {exc}") from exc
    return np.clip(data, 0.0, 1.0)


def save_image(img: np.ndarray, path, fmt: str | None = None) -> None:
    """Write an image as 8-bit grayscale PNG (default) or binary PGM.

    Float images in [0, 1] are quantized with round-half-up; uint8 arrays are
    written verbatim. ``fmt`` is "png" or "pgm"; when None it is taken from
    the path suffix (".pgm" selects PGM), the path itself is never rewritten.
    """
    path = os.fspath(path)
    arr = np.asarray(img)
    if arr.dtype == np.uint8:
        data = arr
    else:
        data = quantize_u8(as_image(arr, "image"))
    if data.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {data.shape}")
    if fmt is None:
        fmt = "pgm" if path.lower().endswith(".pgm") else "png"
    fmt = fmt.lower()
    if fmt not in ("png", "pgm"):
        raise ValueError(f"unsupported output format {fmt!r}: expected 'png' or 'pgm'")
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise FileNotFoundError(f"parent directory does not exist: {parent}")
    # Temp-and-rename so failed writes never leave partial rasters behind.
    tmp = path + ".tmp"
    try:
        PILImage.fromarray(data, mode="L").save(tmp, format="PPM" if fmt == "pgm" else "PNG")
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


@dataclass
class PatchGrid:
    """Regular grid of square patches cut from one source image.

    Offsets step by ``stride`` and are clamped to the far edge when the image
    size minus the patch size is not a stride multiple; patch order is
    row-major by (row_offset, col_offset).
    """

    patch_size: int
    stride: int
    source_height: int
    source_width: int
    offsets: list = field(default_factory=list)  # list of (row, col)
    patches: np.ndarray = None  # (n, patch_size, patch_size)

    def __len__(self) -> int:
        return len(self.offsets)


def _axis_offsets(dim: int, patch_size: int, stride: int) -> list[int]:
    offs = list(range(0, dim - patch_size + 1, stride))
    if offs[-1] != dim - patch_size:
        offs.append(dim - patch_size)
    return offs


def extract_patches(img: np.ndarray, patch_size: int = 64, stride: int = 32) -> PatchGrid:
    """Cut ``img`` into overlapping patches covering every source pixel."""
    img = as_image(img)
    h, w = img.shape
    if patch_size > min(h, w):
        raise ValueError(f"patch_size {patch_size} exceeds image dims {img.shape}")
    if not 1 <= stride <= patch_size:
        raise ValueError(f"stride must be in [1, patch_size], got {stride}")
    rows = _axis_offsets(h, patch_size, stride)
    cols = _axis_offsets(w, patch_size, stride)
    offsets = [(r, c) for r in rows for c in cols]
    patches = np.stack([img[r : r + patch_size, c : c + patch_size] for r, c in offsets])
    return PatchGrid(patch_size, stride, h, w, offsets, patches)


def stitch_weights(patch_size: int) -> np.ndarray:
    """Separable raised-cosine blend weights for one patch, floored at 1e-3."""
    t = np.arange(patch_size, dtype=np.float64)
    w1 = 0.5 - 0.5 * np.cos(2.0 * np.pi * (t + 0.5) / patch_size)
    w1 = np.maximum(w1, STITCH_WEIGHT_FLOOR)
    return np.outer(w1, w1)


def stitch_patches(grid: PatchGrid) -> np.ndarray:
    """Blend a patch grid back into a full image with weighted averaging."""
    if len(grid) == 0:
        raise ValueError("cannot stitch an empty patch grid")
    ps = grid.patch_size
    if grid.patches.shape[1:] != (ps, ps):
        raise ValueError(
            f"patch array shape {grid.patches.shape[1:]} does not match patch_size {ps}"
        )
    acc = np.zeros((grid.source_height, grid.source_width), dtype=np.float64)
    den = np.zeros_like(acc)
    w = stitch_weights(ps)
    for (r, c), patch in zip(grid.offsets, grid.patches):
        if r < 0 or c < 0 or r + ps > grid.source_height or c + ps > grid.source_width:
            raise ValueError(f"patch at ({r}, {c}) falls outside the source bounds")
        acc[r : r + ps, c : c + ps] += w * patch
        den[r : r + ps, c : c + ps] += w
    if den.min() <= 0.0:
        raise ValueError("patch grid leaves source pixels uncovered")
    return np.clip(acc / den, 0.0, 1.0)


def dihedral_augment(img: np.ndarray) -> list[np.ndarray]:
    """The 8 square-symmetry variants of ``img`` in a fixed order.

    Order: identity, rot90, rot180, rot270, hflip, vflip, transpose,
    anti-transpose.
    """
    img = as_image(img)
    return [
        img.copy(),
        np.rot90(img, 1).copy(),
        np.rot90(img, 2).copy(),
        np.rot90(img, 3).copy(),
        np.fliplr(img).copy(),
        np.flipud(img).copy(),
        img.T.copy(),
        np.rot90(img, 2).T.copy(),
    ]


def histogram_stretch(img: np.ndarray) -> tuple[np.ndarray, bool]:
    """Affinely remap the observed intensity range onto [0, 255].

    Returns ``(stretched_u8, degenerate)``. A constant input cannot be
    stretched; it maps to all zeros with ``degenerate=True`` so batch
    pipelines keep running on blank patches.
    """
    img = as_image(img)
    fmin = float(img.min())
    fmax = float(img.max())
    if fmax == fmin:
        return np.zeros(img.shape, dtype=np.uint8), True
    g = (img - fmin) / (fmax - fmin)
    return quantize_u8(g), False
