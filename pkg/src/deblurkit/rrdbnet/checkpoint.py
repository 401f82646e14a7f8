"""Binary checkpoint format for network weights.

Layout (all integers little-endian):

    8 bytes   magic ``RRDBCKPT``
    u32       format version (currently 1)
    u32       length of the config JSON, then that many UTF-8 bytes
    per parameter, in canonical order:
        u16   name length, then the UTF-8 name
        u8    rank, then rank u32 dims
        float32 data, C order

Weights are stored and held in float32, so save -> load roundtrips
bit-identically.
"""

from __future__ import annotations

import io
import json
import os
import struct

import numpy as np

from .net import NetConfig, param_specs

MAGIC = b"RRDBCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: dict[str, np.ndarray], config: NetConfig) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    cfg = json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(cfg)))
    buf.write(cfg)
    for name, shape in param_specs(config):
        if name not in params:
            raise CheckpointError(f"parameter {name!r} missing from params dict")
        arr = np.ascontiguousarray(params[name], dtype="<f4")
        if arr.shape != shape:
            raise CheckpointError(f"parameter {name!r} has shape {arr.shape}, expected {shape}")
        nb = name.encode("utf-8")
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def _read(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], NetConfig]:
    with open(path, "rb") as fh:
        if _read(fh, len(MAGIC), "magic") != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", _read(fh, 4, "version"))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        (cfg_len,) = struct.unpack("<I", _read(fh, 4, "config length"))
        try:
            config = NetConfig.from_dict(json.loads(_read(fh, cfg_len, "config")))
        except (ValueError, TypeError) as exc:
            raise CheckpointError(f"{path}: invalid config block: {exc}") from exc
        params: dict[str, np.ndarray] = {}
        for name, shape in param_specs(config):
            (name_len,) = struct.unpack("<H", _read(fh, 2, "name length"))
            stored = _read(fh, name_len, "name").decode("utf-8")
            if stored != name:
                raise CheckpointError(f"{path}: expected parameter {name!r}, found {stored!r}")
            (rank,) = struct.unpack("<B", _read(fh, 1, "rank"))
            dims = struct.unpack(f"<{rank}I", _read(fh, 4 * rank, "dims"))
            if dims != shape:
                raise CheckpointError(f"{path}: parameter {name!r} has dims {dims}, expected {shape}")
            count = int(np.prod(dims, dtype=np.int64))
            raw = _read(fh, 4 * count, f"data of {name!r}")
            params[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
        extra = fh.read(1)
        if extra:
            raise CheckpointError(f"{path}: trailing bytes after last parameter")
    return params, config
