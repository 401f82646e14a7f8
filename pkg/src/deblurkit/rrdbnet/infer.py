"""Whole-image restoration: overlapping patches through the net, re-stitched."""

from __future__ import annotations

import os
import warnings
from dataclasses import replace

import numpy as np

from ..imagecore import extract_patches, histogram_stretch, stitch_patches
from ..validation import as_image
from .checkpoint import load_checkpoint
from .net import net_forward


def infer_image(
    img,
    checkpoint,
    *,
    patch_size: int = 64,
    stride: int = 32,
    batch_size: int = 16,
    stretch: bool = False,
) -> np.ndarray:
    """Run the network over ``img`` patchwise and return a [0, 1] float image.

    ``checkpoint`` is a checkpoint path or an in-memory ``(params, config)``
    pair. Patch predictions are clamped to [0, 1] and blended back with the
    cosine stitching window; ``stretch`` additionally applies the full-range
    histogram stretch before returning.
    """
    if isinstance(checkpoint, (str, os.PathLike)):
        params, config = load_checkpoint(checkpoint)
    else:
        params, config = checkpoint
    if patch_size % 2:
        raise ValueError(f"patch_size must be even, got {patch_size}")
    img = as_image(img, "img")
    grid = extract_patches(img, patch_size, stride)
    out = np.empty_like(grid.patches)
    for start in range(0, len(grid), batch_size):
        batch = grid.patches[start : start + batch_size]
        pred, _ = net_forward(batch[:, None].astype(np.float32), params, config)
        out[start : start + len(batch)] = np.clip(pred[:, 0].astype(np.float64), 0.0, 1.0)
    result = stitch_patches(replace(grid, patches=out))
    if stretch:
        stretched, degenerate = histogram_stretch(result)
        if degenerate:
            warnings.warn("histogram stretch skipped: output image is constant")
        result = stretched.astype(np.float64) / 255.0
    return result
