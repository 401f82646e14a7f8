"""Blind deblurring toolkit for out-of-focus microscopy images.

Pieces: synthetic blur dataset generation (``blursynth``), translation
registration and wavelet denoising (``align``), least-squares PSF recovery
(``kernelest``), a small residual dense restoration network with its own
autodiff (``rrdbnet``), fidelity metrics (``metrics``), and a CLI binding
them end to end (``deblurkit`` entry point).
"""

from .align import Shift, apply_translation, register_translation, wavelet_denoise
from .blursynth import (
    DatasetManifest,
    Kernel,
    add_noise,
    convolve,
    gaussian_kernel,
    gaussian_kernel_bank,
    load_kernel,
    load_manifest,
    save_kernel,
    save_manifest,
    synthesize_dataset,
)
from .estimators import PsfEstimator, RrdbDeblurrer
from .imagecore import (
    PatchGrid,
    dihedral_augment,
    extract_patches,
    histogram_stretch,
    load_image,
    save_image,
    stitch_patches,
)
from .kernelest import (
    KernelBank,
    KernelEstimate,
    build_kernel_bank,
    estimate_kernel,
    reblur_fit_mse,
    select_kernel_size,
    size_category,
    write_bank_report,
)
from .metrics import SsimConfig, mse, psnr, ssim
from .rrdbnet import (
    NetConfig,
    TrainConfig,
    TrainingReport,
    infer_image,
    init_params,
    load_checkpoint,
    net_forward,
    save_checkpoint,
    train,
    train_on_arrays,
)

__version__ = "0.1.0"

__all__ = [
    "DatasetManifest",
    "Kernel",
    "KernelBank",
    "KernelEstimate",
    "NetConfig",
    "PatchGrid",
    "PsfEstimator",
    "RrdbDeblurrer",
    "Shift",
    "SsimConfig",
    "TrainConfig",
    "TrainingReport",
    "add_noise",
    "apply_translation",
    "build_kernel_bank",
    "convolve",
    "dihedral_augment",
    "estimate_kernel",
    "extract_patches",
    "gaussian_kernel",
    "gaussian_kernel_bank",
    "histogram_stretch",
    "infer_image",
    "init_params",
    "load_checkpoint",
    "load_image",
    "load_kernel",
    "load_manifest",
    "mse",
    "net_forward",
    "psnr",
    "reblur_fit_mse",
    "register_translation",
    "save_checkpoint",
    "save_image",
    "save_kernel",
    "save_manifest",
    "select_kernel_size",
    "size_category",
    "ssim",
    "stitch_patches",
    "synthesize_dataset",
    "train",
    "train_on_arrays",
    "wavelet_denoise",
    "write_bank_report",
]
