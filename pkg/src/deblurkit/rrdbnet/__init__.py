"""Small residual-in-residual dense network with hand-rolled autodiff."""

from .adam import AdamState, NonFiniteGradientError, adam_init, adam_step
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .infer import infer_image
from .net import (
    NetConfig,
    init_params,
    net_backward,
    net_forward,
    param_specs,
    rdb_backward,
    rdb_forward,
    rrdb_backward,
    rrdb_forward,
)
from .train import (
    EpochStats,
    NonFiniteLossError,
    TrainConfig,
    TrainingReport,
    load_pairs_from_manifest,
    train,
    train_on_arrays,
)

__all__ = [
    "AdamState",
    "CheckpointError",
    "EpochStats",
    "NetConfig",
    "NonFiniteGradientError",
    "NonFiniteLossError",
    "TrainConfig",
    "TrainingReport",
    "adam_init",
    "adam_step",
    "infer_image",
    "init_params",
    "load_checkpoint",
    "load_pairs_from_manifest",
    "net_backward",
    "net_forward",
    "param_specs",
    "rdb_backward",
    "rdb_forward",
    "rrdb_backward",
    "rrdb_forward",
    "save_checkpoint",
    "train",
    "train_on_arrays",
]
