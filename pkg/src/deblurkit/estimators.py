"""Estimator-style wrappers around kernel recovery and the restoration net.

Both cores are fit/predict learners at heart, so they are exposed with the
scikit-learn protocol (``get_params``/``set_params``, trailing-underscore
fitted attributes, fit returns self) on top of the functional modules.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .align import wavelet_denoise
from .blursynth import convolve
from .kernelest import estimate_kernel, select_kernel_size
from .rrdbnet import NetConfig, TrainConfig, infer_image, net_forward, train_on_arrays
from .validation import as_image


class PsfEstimator(BaseEstimator):
    """Recovers the blur kernel linking an aligned sharp/blurry image pair.

    With ``size=None`` the kernel size is searched over odd values in
    [min_size, max_size]; otherwise the fixed size is used. ``denoise``
    runs wavelet shrinkage on the blurry input before estimation, which
    helps on noisy acquisitions.
    """

    def __init__(
        self,
        size=None,
        min_size: int = 3,
        max_size: int = 35,
        lam="auto",
        denoise: bool = False,
        denoise_levels: int = 3,
    ):
        self.size = size
        self.min_size = min_size
        self.max_size = max_size
        self.lam = lam
        self.denoise = denoise
        self.denoise_levels = denoise_levels

    def fit(self, sharp, blur):
        sharp = as_image(sharp, "sharp")
        blur = as_image(blur, "blur")
        blur_in = wavelet_denoise(blur, levels=self.denoise_levels) if self.denoise else blur
        if self.size is None:
            est = select_kernel_size(sharp, blur_in, self.min_size, self.max_size, lam=self.lam)
        else:
            est = estimate_kernel(sharp, blur_in, self.size, lam=self.lam)
        self.estimate_ = est
        self.kernel_ = est.kernel
        self.size_ = est.size
        self.fit_mse_ = est.fit_mse
        return self

    def predict(self, sharp):
        """Re-blur ``sharp`` with the recovered kernel."""
        check_is_fitted(self, "kernel_")
        return convolve(sharp, self.kernel_)


class RrdbDeblurrer(BaseEstimator):
    """Patch-to-patch restoration network with an estimator interface.

    ``fit(X, y)`` trains on (blurred, sharp) patch stacks of shape
    (n, ps, ps) or (n, 1, ps, ps); ``predict`` maps patches through the
    net and ``deblur`` restores a full image patchwise.
    """

    def __init__(
        self,
        num_rrdb: int = 4,
        base_channels: int = 64,
        epochs: int = 1,
        batch_size: int = 16,
        learning_rate: float = 1e-4,
        seed: int = 0,
        validation_fraction: float = 0.1,
        max_steps=None,
    ):
        self.num_rrdb = num_rrdb
        self.base_channels = base_channels
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.validation_fraction = validation_fraction
        self.max_steps = max_steps

    @staticmethod
    def _as_stack(arr, name: str) -> np.ndarray:
        arr = np.asarray(arr, dtype=np.float32)
        if arr.ndim == 3:
            arr = arr[:, None]
        if arr.ndim != 4 or arr.shape[1] != 1:
            raise ValueError(f"{name} must be (n, ps, ps) or (n, 1, ps, ps), got {arr.shape}")
        return arr

    def fit(self, X, y):
        x = self._as_stack(X, "X")
        t = self._as_stack(y, "y")
        net_config = NetConfig(num_rrdb=self.num_rrdb, base_channels=self.base_channels)
        train_config = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
            validation_fraction=self.validation_fraction,
            max_steps=self.max_steps,
        )
        report = train_on_arrays(x, t, net_config, train_config)
        self.report_ = report
        self.params_ = report.params
        self.net_config_ = report.net_config
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        squeeze = np.asarray(X).ndim == 3
        x = self._as_stack(X, "X")
        out = np.empty_like(x)
        for start in range(0, x.shape[0], self.batch_size):
            pred, _ = net_forward(x[start : start + self.batch_size], self.params_, self.net_config_)
            out[start : start + pred.shape[0]] = np.clip(pred, 0.0, 1.0)
        return out[:, 0] if squeeze else out

    def deblur(self, img, patch_size: int = 64, stride: int = 32, stretch: bool = False):
        check_is_fitted(self, "params_")
        return infer_image(
            img,
            (self.params_, self.net_config_),
            patch_size=patch_size,
            stride=stride,
            batch_size=self.batch_size,
            stretch=stretch,
        )
