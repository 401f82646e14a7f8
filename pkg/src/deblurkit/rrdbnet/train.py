"""Training loop: manifest-driven data, MSE objective, Adam updates.

Runs are reproducible: one seed fixes the weight init, the train/validation
split and every epoch's shuffle, and all math is plain deterministic numpy.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..blursynth import load_manifest
from ..imagecore import load_image
from .adam import adam_init, adam_step
from .checkpoint import save_checkpoint
from .net import NetConfig, init_params, net_forward, net_backward
from . import ops


class NonFiniteLossError(RuntimeError):
    def __init__(self, loss: float, epoch: int, batch: int):
        super().__init__(
            f"training loss became non-finite ({loss!r}) at epoch {epoch}, batch {batch}"
        )
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1
    batch_size: int = 16
    learning_rate: float = 1e-4
    seed: int = 0
    validation_fraction: float = 0.1
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    max_steps: int | None = None  # step cap that can stop mid-epoch

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError(
                f"validation_fraction must be in [0, 1), got {self.validation_fraction}"
            )


@dataclass
class EpochStats:
    epoch: int
    train_mse: float
    val_mse: float | None


@dataclass
class TrainingReport:
    net_config: NetConfig
    train_config: TrainConfig
    epoch_stats: list[EpochStats]
    step_losses: list[float]
    final_val_mse: float | None
    total_steps: int
    wall_time_s: float
    checkpoint_path: str | None = None
    params: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def to_json(self) -> str:
        doc = {
            "net_config": self.net_config.to_dict(),
            "train_config": asdict(self.train_config),
            "seed": self.train_config.seed,
            "epochs": [asdict(s) for s in self.epoch_stats],
            "step_losses": self.step_losses,
            "final_val_mse": self.final_val_mse,
            "total_steps": self.total_steps,
            "wall_time_s": self.wall_time_s,
            "checkpoint_path": self.checkpoint_path,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_pairs_from_manifest(manifest_path) -> tuple[np.ndarray, np.ndarray]:
    """Read (blurred, sharp) patch pairs as (n, 1, ps, ps) float32 arrays."""
    manifest = load_manifest(manifest_path)
    base = os.path.dirname(os.path.abspath(os.fspath(manifest_path)))
    ps = manifest.patch_size
    n = len(manifest.pairs)
    x = np.empty((n, 1, ps, ps), dtype=np.float32)
    y = np.empty((n, 1, ps, ps), dtype=np.float32)
    for i, (sharp_path, blur_path, _kernel_id) in enumerate(manifest.pairs):
        sharp = load_image(os.path.join(base, sharp_path))
        blur = load_image(os.path.join(base, blur_path))
        if sharp.shape != (ps, ps) or blur.shape != (ps, ps):
            raise ValueError(
                f"pair {i}: patch shape {blur.shape} does not match manifest patch_size {ps}"
            )
        x[i, 0] = blur
        y[i, 0] = sharp
    return x, y


def _forward_mse(params, config, x, y, batch_size) -> float:
    total = 0.0
    for start in range(0, x.shape[0], batch_size):
        xb = x[start : start + batch_size]
        yb = y[start : start + batch_size]
        pred, _ = net_forward(xb, params, config)
        total += ops.mse_loss(pred, yb) * xb.shape[0]
    return total / x.shape[0]


def train_on_arrays(
    x: np.ndarray,
    y: np.ndarray,
    net_config: NetConfig,
    train_config: TrainConfig,
    out_checkpoint=None,
) -> TrainingReport:
    if x.shape != y.shape or x.ndim != 4 or x.shape[1] != 1:
        raise ValueError(f"expected matching (n, 1, ps, ps) arrays, got {x.shape} and {y.shape}")
    n = x.shape[0]
    if n < train_config.batch_size:
        raise ValueError(f"need at least batch_size={train_config.batch_size} pairs, got {n}")
    x = x.astype(np.float32, copy=False)
    y = y.astype(np.float32, copy=False)

    # One seed determines everything: weight init, split, epoch shuffles.
    init_ss, order_ss = np.random.SeedSequence(train_config.seed).spawn(2)
    params = init_params(net_config, init_ss)
    rng = np.random.default_rng(order_ss)

    n_val = min(int(round(train_config.validation_fraction * n)), n - 1)
    perm = rng.permutation(n)
    val_idx = perm[:n_val]
    train_idx = perm[n_val:]

    state = adam_init(params)
    step_losses: list[float] = []
    epoch_stats: list[EpochStats] = []
    t0 = time.perf_counter()
    step = 0
    stop = False
    for epoch in range(train_config.epochs):
        order = rng.permutation(train_idx)
        epoch_losses: list[float] = []
        for batch_i, start in enumerate(range(0, len(order), train_config.batch_size)):
            idx = order[start : start + train_config.batch_size]
            pred, cache = net_forward(x[idx], params, net_config)
            loss = ops.mse_loss(pred, y[idx])
            if not math.isfinite(loss):
                raise NonFiniteLossError(loss, epoch, batch_i)
            dout = ops.mse_loss_backward(pred, y[idx])
            grads = net_backward(dout, cache)
            params, state = adam_step(
                params,
                grads,
                state,
                lr=train_config.learning_rate,
                betas=train_config.adam_betas,
                eps=train_config.adam_eps,
            )
            step += 1
            step_losses.append(loss)
            epoch_losses.append(loss)
            if train_config.max_steps is not None and step >= train_config.max_steps:
                stop = True
                break
        val_mse = (
            _forward_mse(params, net_config, x[val_idx], y[val_idx], train_config.batch_size)
            if len(val_idx)
            else None
        )
        epoch_stats.append(EpochStats(epoch, float(np.mean(epoch_losses)), val_mse))
        if stop:
            break
    wall = time.perf_counter() - t0

    path_str = None
    if out_checkpoint is not None:
        save_checkpoint(out_checkpoint, params, net_config)
        path_str = os.fspath(out_checkpoint)
    return TrainingReport(
        net_config=net_config,
        train_config=train_config,
        epoch_stats=epoch_stats,
        step_losses=step_losses,
        final_val_mse=epoch_stats[-1].val_mse,
        total_steps=step,
        wall_time_s=wall,
        checkpoint_path=path_str,
        params=params,
    )


def train(
    manifest_path,
    net_config: NetConfig,
    train_config: TrainConfig,
    out_checkpoint=None,
) -> TrainingReport:
    x, y = load_pairs_from_manifest(manifest_path)
    return train_on_arrays(x, y, net_config, train_config, out_checkpoint=out_checkpoint)
