"""Gaussian blur kernels, forward blur simulation, and training-set synthesis.

The forward model is ``blurred = kernel * sharp (+ noise)``: true 2D
convolution with mirror-reflected borders, optionally followed by clamped
white Gaussian noise. Datasets pair sharp and blurred patches cut from the
same grid so pair i in both sets covers the same source region.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .imagecore import extract_patches, save_image
from .validation import (
    KERNEL_SIDE_MAX,
    as_image,
    check_kernel_taps,
)


@dataclass(frozen=True)
class Kernel:
    """An odd-sided, non-negative point-spread function summing to 1."""

    taps: np.ndarray
    kernel_id: str

    def __post_init__(self):
        object.__setattr__(self, "taps", check_kernel_taps(self.taps, self.kernel_id))

    @property
    def size(self) -> int:
        return self.taps.shape[0]


def _as_taps(kernel) -> np.ndarray:
    taps = kernel.taps if isinstance(kernel, Kernel) else np.asarray(kernel, dtype=np.float64)
    return check_kernel_taps(taps)


def gaussian_kernel(sigma: float, kernel_id: str | None = None) -> Kernel:
    """Sampled isotropic Gaussian, truncated at radius ceil(3*sigma)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    side = 2 * radius + 1
    if side > KERNEL_SIDE_MAX:
        raise ValueError(
            f"sigma {sigma} needs a {side}x{side} kernel, above the {KERNEL_SIDE_MAX} side cap"
        )
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    g1 = np.exp(-(ax**2) / (2.0 * sigma * sigma))
    taps = np.outer(g1, g1)
    taps /= taps.sum()
    if kernel_id is None:
        kernel_id = f"gauss-{sigma:.6g}"
    return Kernel(taps, kernel_id)


def gaussian_kernel_bank(sigma_min: float, sigma_max: float, count: int) -> list[Kernel]:
    """``count`` Gaussian kernels with sigmas evenly spaced over the range."""
    if not 0 < sigma_min <= sigma_max:
        raise ValueError(f"need 0 < sigma_min <= sigma_max, got [{sigma_min}, {sigma_max}]")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    sigmas = np.linspace(sigma_min, sigma_max, count) if count > 1 else np.array([sigma_min])
    return [gaussian_kernel(float(s)) for s in sigmas]


def _mirror_pad(img: np.ndarray, radius: int) -> np.ndarray:
    return np.pad(img, radius, mode="symmetric")


def convolve(img, kernel, method: str = "auto", clip: bool = True) -> np.ndarray:
    """Blur ``img`` by true 2D convolution with mirror-reflected borders.

    Args:
        img: 2D image in [0, 1].
        kernel: a :class:`Kernel` or raw taps array.
        method: "direct" (per-tap summation), "fft", or "auto".
        clip: clamp the result back to [0, 1] (disable to inspect the raw
            linear response).

    Both methods evaluate the same definition; they agree within 1e-8.
    """
    img = as_image(img)
    taps = _as_taps(kernel)
    s = taps.shape[0]
    if s > min(img.shape):
        raise ValueError(f"kernel side {s} exceeds image dims {img.shape}")
    if method == "auto":
        method = "fft" if s >= 13 else "direct"
    radius = s // 2
    padded = _mirror_pad(img, radius)
    if method == "direct":
        h, w = img.shape
        out = np.zeros((h, w), dtype=np.float64)
        # True convolution: tap (a, b) weighs the sample mirrored about the
        # kernel center.
        for a in range(s):
            for b in range(s):
                out += taps[a, b] * padded[s - 1 - a : s - 1 - a + h, s - 1 - b : s - 1 - b + w]
    elif method == "fft":
        out = fftconvolve(padded, taps, mode="valid")
    else:
        raise ValueError(f"unknown convolution method {method!r}")
    return np.clip(out, 0.0, 1.0) if clip else out


def add_noise(img, sigma: float, seed: int) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise of std ``sigma``, clamped to [0, 1]."""
    img = as_image(img)
    if sigma < 0:
        raise ValueError(f"noise sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return img.copy()
    rng = np.random.default_rng(seed)
    return np.clip(img + rng.normal(0.0, sigma, size=img.shape), 0.0, 1.0)


# --- KERN v1 kernel file format -------------------------------------------

def save_kernel(kernel: Kernel, path) -> None:
    """Write taps in the KERN v1 text format (header + one row per line)."""
    s = kernel.size
    lines = [f"KERN v1 {s}"]
    for row in kernel.taps:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def load_kernel(path, kernel_id: str | None = None) -> Kernel:
    """Read a KERN v1 file; taps are validated and renormalized to sum 1."""
    path = os.fspath(path)
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3 or header[0] != "KERN" or header[1] != "v1":
            raise ValueError(f"{path}: not a KERN v1 file")
        s = int(header[2])
        taps = np.loadtxt(fh, dtype=np.float64, max_rows=s)
    taps = np.atleast_2d(taps)
    if taps.shape != (s, s):
        raise ValueError(f"{path}: expected {s}x{s} taps, got {taps.shape}")
    if taps.min() < 0 or taps.sum() <= 0:
        raise ValueError(f"{path}: taps must be non-negative with positive sum")
    taps = taps / taps.sum()
    if kernel_id is None:
        kernel_id = os.path.splitext(os.path.basename(path))[0]
    return Kernel(taps, kernel_id)


# --- dataset synthesis ------------------------------------------------------

@dataclass
class DatasetManifest:
    """Declarative listing of (sharp patch, blurred patch, kernel id) pairs.

    Paths are relative to the manifest's own directory.
    """

    patch_size: int
    stride: int
    noise_sigma: float
    seed: int
    kernels: list = field(default_factory=list)  # [{"kernel_id", "path"}]
    pairs: list = field(default_factory=list)  # [(sharp_path, blur_path, kernel_id)]

    def to_json(self) -> str:
        doc = {
            "patch_size": self.patch_size,
            "stride": self.stride,
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "kernels": self.kernels,
            "pairs": [list(p) for p in self.pairs],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        doc = json.loads(text)
        return cls(
            patch_size=doc["patch_size"],
            stride=doc["stride"],
            noise_sigma=doc["noise_sigma"],
            seed=doc["seed"],
            kernels=doc["kernels"],
            pairs=[tuple(p) for p in doc["pairs"]],
        )


def save_manifest(manifest: DatasetManifest, path) -> None:
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(manifest.to_json())
    os.replace(tmp, path)


def load_manifest(path) -> DatasetManifest:
    with open(os.fspath(path)) as fh:
        return DatasetManifest.from_json(fh.read())


def _pair_noise_seed(seed: int, image_index: int, kernel_index: int) -> int:
    ss = np.random.SeedSequence([seed, image_index, kernel_index])
    return int(ss.generate_state(1)[0])


def synthesize_dataset(
    sharp_images,
    kernels,
    noise_sigma: float,
    seed: int,
    out_dir,
    patch_size: int = 64,
    stride: int = 32,
) -> DatasetManifest:
    """Blur every image with every kernel and cut aligned patch pairs.

    Whole images are blurred first so patch borders see true context, then
    sharp and blurred grids are cut identically; pair i covers the same
    region in both sets. Writes patches, KERN files, and a manifest under
    ``out_dir``; per-pair noise streams derive from (seed, image, kernel) so
    results are byte-identical regardless of processing order.
    """
    if len(sharp_images) == 0 or len(kernels) == 0:
        raise ValueError("need at least one sharp image and one kernel")
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    out_dir = os.fspath(out_dir)
    sharp_dir = os.path.join(out_dir, "sharp")
    blur_dir = os.path.join(out_dir, "blur")
    kern_dir = os.path.join(out_dir, "kernels")
    for d in (sharp_dir, blur_dir, kern_dir):
        os.makedirs(d, exist_ok=True)

    manifest = DatasetManifest(patch_size, stride, noise_sigma, seed)
    for kernel in kernels:
        kpath = os.path.join("kernels", f"{kernel.kernel_id}.kern")
        save_kernel(kernel, os.path.join(out_dir, kpath))
        manifest.kernels.append({"kernel_id": kernel.kernel_id, "path": kpath})

    for i, raw in enumerate(sharp_images):
        img = as_image(raw, f"sharp image {i}")
        sharp_grid = extract_patches(img, patch_size, stride)
        sharp_paths = []
        for (r, c), patch in zip(sharp_grid.offsets, sharp_grid.patches):
            rel = os.path.join("sharp", f"img{i:03d}_r{r:05d}_c{c:05d}.png")
            save_image(patch, os.path.join(out_dir, rel))
            sharp_paths.append(rel)
        for j, kernel in enumerate(kernels):
            blurred = convolve(img, kernel)
            if noise_sigma > 0:
                blurred = add_noise(blurred, noise_sigma, _pair_noise_seed(seed, i, j))
            blur_grid = extract_patches(blurred, patch_size, stride)
            assert blur_grid.offsets == sharp_grid.offsets
            for (r, c), patch, spath in zip(
                blur_grid.offsets, blur_grid.patches, sharp_paths
            ):
                rel = os.path.join(
                    "blur", f"img{i:03d}_k{j:03d}_r{r:05d}_c{c:05d}.png"
                )
                save_image(patch, os.path.join(out_dir, rel))
                manifest.pairs.append((spath, rel, kernel.kernel_id))

    save_manifest(manifest, os.path.join(out_dir, "manifest.json"))
    return manifest
