"""Residual-in-residual dense network assembled from the ops module.

Parameters live in a plain ``{name: ndarray}`` dict whose canonical order is
given by ``param_specs``. Weights are float32; forward/backward run in the
dtype of the input activations (float64 inputs exactly represent the float32
weights, which keeps finite-difference checks honest).

Layout of one dense block (RDB): five 3x3 convs; conv l sees the block input
concatenated with the outputs of convs 1..l-1 (growth = base channel count),
convs 1-4 are followed by leaky ReLU, conv 5 fuses back down to the base
width with no activation. The block output is input + scale * fusion.
An RRDB chains three RDBs and adds a second residual at the same scale.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import ops


@dataclass(frozen=True)
class NetConfig:
    num_rrdb: int = 4
    base_channels: int = 64
    rdb_per_rrdb: int = 3
    dense_layers_per_rdb: int = 5
    residual_scale: float = 1.0
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.num_rrdb < 1 or self.base_channels < 1:
            raise ValueError("num_rrdb and base_channels must be positive")
        if self.rdb_per_rrdb < 1 or self.dense_layers_per_rdb < 2:
            raise ValueError("need at least one RDB with two dense layers")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        return cls(**d)


def param_specs(config: NetConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical (name, shape) list; init, Adam and checkpoints follow it."""
    c = config.base_channels
    specs = [("first_conv.weight", (c, 1, 3, 3)), ("first_conv.bias", (c,))]
    for i in range(config.num_rrdb):
        for j in range(config.rdb_per_rrdb):
            for l in range(1, config.dense_layers_per_rdb + 1):
                cin = l * c
                cout = c
                prefix = f"rrdb{i}.rdb{j}.conv{l}"
                specs.append((f"{prefix}.weight", (cout, cin, 3, 3)))
                specs.append((f"{prefix}.bias", (cout,)))
    specs += [
        ("trunk_conv.weight", (c, c, 3, 3)),
        ("trunk_conv.bias", (c,)),
        ("post_upsample_conv.weight", (c, c, 3, 3)),
        ("post_upsample_conv.bias", (c,)),
        ("last_conv.weight", (1, c, 3, 3)),
        ("last_conv.bias", (1,)),
    ]
    return specs


def _is_scaled_down(name: str, config: NetConfig) -> bool:
    # Fusion convs and the output conv start small so residual branches
    # begin near identity.
    fusion = f"conv{config.dense_layers_per_rdb}."
    return fusion in name or name.startswith("last_conv.")


def init_params(config: NetConfig, seed: int) -> dict[str, np.ndarray]:
    """He-uniform weights (limit sqrt(6/fan_in)), zero biases.

    Fusion and final convs get a 0.1 gain. Draws happen in canonical
    parameter order from one generator, so a (config, seed) pair fully
    determines every weight.
    """
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_specs(config):
        if name.endswith(".bias"):
            params[name] = np.zeros(shape, dtype=np.float32)
            continue
        fan_in = shape[1] * shape[2] * shape[3]
        limit = np.sqrt(6.0 / fan_in)
        if _is_scaled_down(name, config):
            limit *= 0.1
        w = rng.uniform(-limit, limit, size=shape)
        params[name] = w.astype(np.float32)
    return params


def _pget(params, prefix, dtype):
    w = params[prefix + ".weight"]
    b = params[prefix + ".bias"]
    if w.dtype != dtype:
        w = w.astype(dtype)
        b = b.astype(dtype)
    return w, b


def rdb_forward_nhwc(x: np.ndarray, params: dict, prefix: str, config: NetConfig):
    """One dense block on channels-last activations (b, h, w, c)."""
    n = config.dense_layers_per_rdb
    dtype = x.dtype
    feats = [x]
    caches = []
    masks = []
    for l in range(1, n + 1):
        inp = feats[0] if l == 1 else np.concatenate(feats, axis=-1)
        w, b = _pget(params, f"{prefix}.conv{l}", dtype)
        z, c = ops.conv2d_forward_nhwc(inp, w, b)
        caches.append(c)
        if l < n:
            a, m = ops.leaky_relu_forward(z, config.leaky_slope)
            masks.append(m)
            feats.append(a)
        else:
            fusion = z
    out = x + dtype.type(config.residual_scale) * fusion
    return out, (caches, masks, config)


def rdb_backward_nhwc(dout: np.ndarray, cache):
    caches, masks, config = cache
    n = config.dense_layers_per_rdb
    c = caches[0][1].shape[1]  # block channel count, from conv1's weight
    scale = dout.dtype.type(config.residual_scale)
    dx = dout.copy()
    dfeats = [None] * n  # dfeats[l-1] accumulates into conv-l's output
    dfeats[n - 1] = scale * dout
    grads: dict[str, np.ndarray] = {}
    for l in range(n, 0, -1):
        dz = dfeats[l - 1]
        if l < n:
            dz = ops.leaky_relu_backward(dz, masks[l - 1])
        dinp, dw, db = ops.conv2d_backward_nhwc(dz, caches[l - 1])
        grads[f"conv{l}.weight"] = dw
        grads[f"conv{l}.bias"] = db
        dx += dinp[..., :c]
        for k in range(1, l):
            piece = dinp[..., k * c : (k + 1) * c]
            if dfeats[k - 1] is None:
                dfeats[k - 1] = piece.copy()
            else:
                dfeats[k - 1] += piece
    return dx, grads


def rrdb_forward_nhwc(x: np.ndarray, params: dict, prefix: str, config: NetConfig):
    h = x
    caches = []
    for j in range(config.rdb_per_rrdb):
        h, c = rdb_forward_nhwc(h, params, f"{prefix}.rdb{j}", config)
        caches.append(c)
    out = x + x.dtype.type(config.residual_scale) * h
    return out, (caches, config)


def rrdb_backward_nhwc(dout: np.ndarray, cache):
    caches, config = cache
    scale = dout.dtype.type(config.residual_scale)
    dh = scale * dout
    grads: dict[str, np.ndarray] = {}
    for j in range(config.rdb_per_rrdb - 1, -1, -1):
        dh, g = rdb_backward_nhwc(dh, caches[j])
        for k, v in g.items():
            grads[f"rdb{j}.{k}"] = v
    dx = dout + dh
    return dx, grads


def rdb_forward(x: np.ndarray, params: dict, prefix: str, config: NetConfig):
    """Dense block on (b, c, h, w) activations; see rdb_forward_nhwc."""
    out, cache = rdb_forward_nhwc(x.transpose(0, 2, 3, 1), params, prefix, config)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2)), cache


def rdb_backward(dout: np.ndarray, cache):
    dx, grads = rdb_backward_nhwc(dout.transpose(0, 2, 3, 1), cache)
    return np.ascontiguousarray(dx.transpose(0, 3, 1, 2)), grads


def rrdb_forward(x: np.ndarray, params: dict, prefix: str, config: NetConfig):
    """Three chained dense blocks plus outer residual, on (b, c, h, w)."""
    out, cache = rrdb_forward_nhwc(x.transpose(0, 2, 3, 1), params, prefix, config)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2)), cache


def rrdb_backward(dout: np.ndarray, cache):
    dx, grads = rrdb_backward_nhwc(dout.transpose(0, 2, 3, 1), cache)
    return np.ascontiguousarray(dx.transpose(0, 3, 1, 2)), grads


def net_forward(x: np.ndarray, params: dict, config: NetConfig):
    """Forward pass. Input (b, 1, h, w) with even h, w; output same shape.

    Pipeline: first conv -> RRDB chain -> trunk conv -> global residual ->
    nearest x2 upsample -> conv + leaky ReLU -> 2x2 max pool -> output conv.
    """
    if x.ndim != 4 or x.shape[1] != 1:
        raise ValueError(f"expected (batch, 1, h, w) input, got {x.shape}")
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ValueError(f"spatial dims must be even, got {x.shape}")
    dtype = x.dtype
    xc = x.transpose(0, 2, 3, 1)  # channels-last internally
    w, b = _pget(params, "first_conv", dtype)
    fea, c_first = ops.conv2d_forward_nhwc(xc, w, b)
    h = fea
    rrdb_caches = []
    for i in range(config.num_rrdb):
        h, c = rrdb_forward_nhwc(h, params, f"rrdb{i}", config)
        rrdb_caches.append(c)
    w, b = _pget(params, "trunk_conv", dtype)
    trunk, c_trunk = ops.conv2d_forward_nhwc(h, w, b)
    g = fea + trunk
    up = ops.upsample2x_forward_nhwc(g)
    w, b = _pget(params, "post_upsample_conv", dtype)
    p, c_post = ops.conv2d_forward_nhwc(up, w, b)
    a, m_post = ops.leaky_relu_forward(p, config.leaky_slope)
    pooled, c_pool = ops.maxpool2x2_forward_nhwc(a)
    w, b = _pget(params, "last_conv", dtype)
    out, c_last = ops.conv2d_forward_nhwc(pooled, w, b)
    cache = (c_first, rrdb_caches, c_trunk, c_post, m_post, c_pool, c_last, config)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2)), cache


def net_backward(dout: np.ndarray, cache) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every parameter, keyed like params."""
    c_first, rrdb_caches, c_trunk, c_post, m_post, c_pool, c_last, config = cache
    grads: dict[str, np.ndarray] = {}
    d, dw, db = ops.conv2d_backward_nhwc(dout.transpose(0, 2, 3, 1), c_last)
    grads["last_conv.weight"] = dw
    grads["last_conv.bias"] = db
    d = ops.maxpool2x2_backward_nhwc(d, c_pool)
    d = ops.leaky_relu_backward(d, m_post)
    d, dw, db = ops.conv2d_backward_nhwc(d, c_post)
    grads["post_upsample_conv.weight"] = dw
    grads["post_upsample_conv.bias"] = db
    dg = ops.upsample2x_backward_nhwc(d)
    dtrunk = dg
    dfea = dg.copy()
    d, dw, db = ops.conv2d_backward_nhwc(dtrunk, c_trunk)
    grads["trunk_conv.weight"] = dw
    grads["trunk_conv.bias"] = db
    for i in range(config.num_rrdb - 1, -1, -1):
        d, g = rrdb_backward_nhwc(d, rrdb_caches[i])
        for k, v in g.items():
            grads[f"rrdb{i}.{k}"] = v
    dfea += d
    _, dw, db = ops.conv2d_backward_nhwc(dfea, c_first)
    grads["first_conv.weight"] = dw
    grads["first_conv.bias"] = db
    return grads
