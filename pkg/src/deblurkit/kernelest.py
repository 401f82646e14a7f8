"""Blind PSF recovery from aligned sharp/blurry pairs.

Estimation is linear least squares over the valid region (where the kernel
support never crosses the image border), so no boundary assumption enters:
every row of the design matrix pairs a fully-interior sharp window with one
blurry pixel, and Tikhonov regularization keeps the normal equations
well-posed when the window count is small relative to the tap count.

The recovered taps are projected onto the kernel constraint set (clamp
negatives, renormalize to unit sum); reported fit error is measured after
projection. Size search runs the fixed-size estimator over a range of odd
sizes and keeps the best projected fit, ties going to the smaller kernel.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import fftconvolve

from .blursynth import Kernel, _as_taps, save_kernel
from .validation import as_image, check_same_shape

SIZE_MIN = 3
SIZE_MAX = 35
# Estimation needs some margin of valid interior beyond the kernel support.
MIN_MARGIN = 16


@dataclass(frozen=True)
class KernelEstimate:
    """One recovered kernel plus how well it explains the blurry patch."""

    kernel: Kernel
    size: int
    fit_mse: float
    fit_mse_unprojected: float
    patch_offset: tuple[int, int] | None = None
    denoised: bool = False
    # When estimation ran on a denoised patch, the same kernel scored
    # against the original (pre-denoise) patch.
    fit_mse_original: float | None = None
    taps_unprojected: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True)
class KernelBank:
    """Per-pair estimates binned by kernel size, plus the synthesis picks.

    ``selected`` holds up to ``top_n`` lowest-fit_mse estimates from the
    medium and large bins (in that order); small kernels are reported but
    never selected.
    """

    small: list[KernelEstimate]
    medium: list[KernelEstimate]
    large: list[KernelEstimate]
    selected: list[KernelEstimate]


def _check_size(size: int) -> int:
    size = int(size)
    if size % 2 == 0 or not SIZE_MIN <= size <= SIZE_MAX:
        raise ValueError(f"kernel size must be odd in [{SIZE_MIN}, {SIZE_MAX}], got {size}")
    return size


def size_category(size: int) -> str:
    size = _check_size(size)
    if size <= 9:
        return "small"
    if size <= 19:
        return "medium"
    return "large"


def _design_matrix(sharp: np.ndarray, size: int) -> np.ndarray:
    # Row (i, j) of A holds the sharp window centered so that A @ taps.ravel()
    # equals the true (flipped-kernel) valid convolution at pixel (i+r, j+r).
    n_valid = (sharp.shape[0] - size + 1) * (sharp.shape[1] - size + 1)
    win = sliding_window_view(sharp, (size, size))[:, :, ::-1, ::-1]
    return win.reshape(n_valid, size * size)


def estimate_kernel(sharp, blur, size: int, lam="auto") -> KernelEstimate:
    """Recover a ``size``-sided kernel k minimizing |k * sharp - blur|² + λ|k|².

    ``lam="auto"`` scales the ridge weight with the sharp image's power and
    the tap count; ``lam=0`` demands an overdetermined system.
    """
    sharp = as_image(sharp, "sharp")
    blur = as_image(blur, "blur")
    check_same_shape(sharp, blur, "sharp and blur")
    size = _check_size(size)
    h, w = sharp.shape
    if min(h, w) < size + MIN_MARGIN:
        raise ValueError(
            f"image dims {sharp.shape} too small for size {size}: "
            f"need at least {size + MIN_MARGIN} per axis"
        )
    n_taps = size * size
    a = _design_matrix(sharp, size)
    r = size // 2
    b = blur[r : h - r, r : w - r].ravel()

    if lam == "auto":
        lam_val = 1e-4 * float(np.mean(sharp**2)) * n_taps
    else:
        lam_val = float(lam)
        if lam_val < 0:
            raise ValueError(f"lambda must be >= 0, got {lam_val}")
    if lam_val == 0.0 and a.shape[0] < n_taps:
        raise ValueError(
            f"size {size} yields {a.shape[0]} equations for {n_taps} unknowns: "
            "the unregularized system is underdetermined; pass lambda > 0 "
            "(or 'auto') to regularize"
        )

    gram = a.T @ a
    if lam_val:
        gram[np.diag_indices_from(gram)] += lam_val
    try:
        taps_raw = np.linalg.solve(gram, a.T @ b)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            f"normal equations are singular at size {size} with lambda={lam_val}; "
            "increase lambda"
        ) from exc

    fit_raw = float(np.mean((a @ taps_raw - b) ** 2))
    taps = np.clip(taps_raw, 0.0, None)
    total = taps.sum()
    if total <= 0:
        raise ValueError(f"estimate at size {size} collapsed: no positive taps")
    taps = taps / total
    fit = float(np.mean((a @ taps - b) ** 2))
    kernel = Kernel(taps.reshape(size, size), f"est-s{size:02d}")
    return KernelEstimate(
        kernel=kernel,
        size=size,
        fit_mse=fit,
        fit_mse_unprojected=fit_raw,
        taps_unprojected=taps_raw.reshape(size, size),
    )


def reblur_fit_mse(sharp, blur, kernel) -> float:
    """Valid-region MSE between kernel * sharp and blur.

    Same objective the estimator minimizes, usable with any kernel — e.g. to
    score a kernel estimated from a denoised patch against the original one.
    """
    sharp = as_image(sharp, "sharp")
    blur = as_image(blur, "blur")
    check_same_shape(sharp, blur, "sharp and blur")
    taps = _as_taps(kernel)
    s = taps.shape[0]
    if s > min(sharp.shape):
        raise ValueError(f"kernel side {s} exceeds image dims {sharp.shape}")
    r = s // 2
    pred = fftconvolve(sharp, taps, mode="valid")
    ref = blur[r : sharp.shape[0] - r, r : sharp.shape[1] - r]
    return float(np.mean((pred - ref) ** 2))


def select_kernel_size(
    sharp,
    blur,
    min_size: int = SIZE_MIN,
    max_size: int = SIZE_MAX,
    lam="auto",
) -> KernelEstimate:
    """Estimate at every odd size in range and keep the lowest projected
    fit_mse; on ties the smaller kernel wins. Sizes too large for the image
    are skipped; failing every size is an error."""
    min_size = _check_size(min_size)
    max_size = _check_size(max_size)
    if min_size > max_size:
        raise ValueError(f"min_size {min_size} exceeds max_size {max_size}")
    best: KernelEstimate | None = None
    failures: list[str] = []
    for size in range(min_size, max_size + 1, 2):
        try:
            est = estimate_kernel(sharp, blur, size, lam=lam)
        except ValueError as exc:
            failures.append(f"size {size}: {exc}")
            continue
        if best is None or est.fit_mse < best.fit_mse:
            best = est
    if best is None:
        raise ValueError(
            "kernel estimation failed at every size:\n" + "\n".join(failures)
        )
    return best


def build_kernel_bank(
    pairs,
    lam="auto",
    top_n: int = 5,
    min_size: int = SIZE_MIN,
    max_size: int = SIZE_MAX,
    denoised: bool = False,
) -> KernelBank:
    """Run the size search on each aligned (sharp, blur[, offset]) patch pair
    and bin the winners by size category.

    A category can end up short of ``top_n``; callers see exactly what was
    available. Results within each bin are sorted by fit_mse ascending.
    """
    if top_n < 0:
        raise ValueError(f"top_n must be >= 0, got {top_n}")
    bins: dict[str, list[KernelEstimate]] = {"small": [], "medium": [], "large": []}
    n_pairs = 0
    for pair in pairs:
        if len(pair) == 3:
            sharp, blur, offset = pair
            offset = (int(offset[0]), int(offset[1]))
        else:
            sharp, blur = pair
            offset = None
        est = select_kernel_size(sharp, blur, min_size, max_size, lam=lam)
        est = replace(est, patch_offset=offset, denoised=denoised)
        bins[size_category(est.size)].append(est)
        n_pairs += 1
    if n_pairs == 0:
        raise ValueError("no patch pairs given")
    for cat in bins:
        bins[cat].sort(key=lambda e: e.fit_mse)
    selected = bins["medium"][:top_n] + bins["large"][:top_n]
    return KernelBank(
        small=bins["small"],
        medium=bins["medium"],
        large=bins["large"],
        selected=selected,
    )


def write_bank_report(bank: KernelBank, out_dir, extra: dict | None = None) -> dict:
    """Write every estimate's kernel (KERN v1) plus a JSON report.

    Kernels land in ``out_dir/kernels/``; the synthesis picks are duplicated
    under ``out_dir/selected/`` so a directory of ready-to-use kernels exists.
    Returns the report document (also written to ``out_dir/report.json``).
    """
    out_dir = os.fspath(out_dir)
    kern_dir = os.path.join(out_dir, "kernels")
    sel_dir = os.path.join(out_dir, "selected")
    os.makedirs(kern_dir, exist_ok=True)
    os.makedirs(sel_dir, exist_ok=True)

    ordered = bank.small + bank.medium + bank.large
    selected_ids = {id(e) for e in bank.selected}
    records = []
    for idx, est in enumerate(ordered):
        stem = f"est{idx:03d}_s{est.size:02d}"
        rel = os.path.join("kernels", stem + ".kern")
        kernel = replace(est.kernel, kernel_id=stem)
        save_kernel(kernel, os.path.join(out_dir, rel))
        if id(est) in selected_ids:
            save_kernel(kernel, os.path.join(sel_dir, stem + ".kern"))
        records.append(
            {
                "kernel_path": rel,
                "size": est.size,
                "category": size_category(est.size),
                "fit_mse": est.fit_mse,
                "fit_mse_unprojected": est.fit_mse_unprojected,
                "fit_mse_original": est.fit_mse_original,
                "patch_offset": list(est.patch_offset) if est.patch_offset else None,
                "denoised": est.denoised,
                "selected": id(est) in selected_ids,
            }
        )
    report = {
        "estimates": records,
        "selected": [r["kernel_path"] for r in records if r["selected"]],
    }
    if extra:
        report.update(extra)
    path = os.path.join(out_dir, "report.json")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)
    return report
