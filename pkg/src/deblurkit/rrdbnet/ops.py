"""Tensor operations for the restoration network, with reverse-mode backwards.

Public activations are (batch, channels, height, width) float arrays. Every
``*_forward`` returns ``(output, cache)`` and the matching ``*_backward``
consumes the cache; plain value-returning aliases (``conv2d``,
``leaky_relu``, ...) exist for callers that do not need gradients. Ops are
dtype-polymorphic so float32 training and float64 gradient checks share one
code path.

Convolutions are 3x3, stride 1, zero-padded, using the cross-correlation
convention (no kernel flip); with the default padding of 1,
output[b,o,y,x] = bias[o] + sum_{i,u,v} weight[o,i,u,v] * input[b,i,y+u-1,x+v-1].

Internally everything runs channels-last: shifting a 3x3 tap by (u, v) is a
fixed row offset in the flattened padded layout, so each tap is one GEMM
that accumulates straight into an embedded output canvas (BLAS beta=1) — no
im2col buffer and no per-tap copies. Row pairings that cross a padded-row
boundary land on zero or never-read border rows. The ``*_nhwc`` variants
let the network keep activations channels-last end to end instead of
transposing around every call. Weight tensors are (out_ch, in_ch, 3, 3) in
both layouts.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg.blas import get_blas_funcs

# Reused flat work buffers, keyed by role and dtype; grown on demand.
_SCRATCH: dict = {}


def _scratch(key: str, dtype, count: int) -> np.ndarray:
    slot = (key, np.dtype(dtype).str)
    buf = _SCRATCH.get(slot)
    if buf is None or buf.size < count:
        buf = np.empty(count, dtype=dtype)
        _SCRATCH[slot] = buf
    return buf[:count]


def _conv_core(canvas: np.ndarray, weight: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """out[b,y,x,o] = sum_{i,u,v} canvas[b, y+u, x+v, i] * weight[o,i,u,v]."""
    b, hp, wp, ci = canvas.shape
    co = weight.shape[0]
    n = b * hp * wp
    m = canvas.reshape(n, ci)
    # Output lives embedded at (1, 1) in a canvas-sized buffer: tap (u, v)
    # then pairs output row j with input row j + (u-1)*wp + (v-1). Border
    # rows of the embedding accumulate junk but are never read.
    oe = _scratch("conv_out", canvas.dtype, n * co).reshape(n, co)
    gemm = get_blas_funcs("gemm", (canvas, weight))
    w_cl = np.ascontiguousarray(weight.transpose(1, 2, 3, 0)).reshape(ci, 9, co)
    for t in range(9):
        u, v = divmod(t, 3)
        off = (u - 1) * wp + (v - 1)
        lo = max(0, -off)
        hi = n - max(0, off)
        w_t = np.ascontiguousarray(w_cl[:, t, :])
        # Transposed views are F-contiguous, so BLAS accumulates in place;
        # the first tap covers every interior row, later taps only widen.
        gemm(
            1.0,
            w_t.T,
            m[lo + off : hi + off].T,
            beta=0.0 if t == 0 else 1.0,
            c=oe[lo:hi].T,
            overwrite_c=True,
        )
    return oe.reshape(b, hp, wp, co)[:, 1 : 1 + out_h, 1 : 1 + out_w, :].copy()


def conv2d_forward_nhwc(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, padding: int = 1):
    """Channels-last conv: x is (b, h, w, ci), output (b, h+2p-2, w+2p-2, co)."""
    b, h, w, ci = x.shape
    co = weight.shape[0]
    if weight.shape != (co, ci, 3, 3):
        raise ValueError(f"weight shape {weight.shape} incompatible with {ci} input channels")
    if bias.shape != (co,):
        raise ValueError(f"bias shape {bias.shape} does not match {co} output channels")
    p = int(padding)
    if not 0 <= p <= 2:
        raise ValueError(f"padding must be 0, 1 or 2, got {padding}")
    out_h, out_w = h + 2 * p - 2, w + 2 * p - 2
    if out_h < 1 or out_w < 1:
        raise ValueError(f"spatial dims {h}x{w} too small for padding {p}")
    xp = np.zeros((b, h + 2 * p, w + 2 * p, ci), dtype=x.dtype)
    xp[:, p : p + h, p : p + w, :] = x
    out = _conv_core(xp, weight, out_h, out_w)
    out += bias
    return out, (xp, weight, p)


def conv2d_backward_nhwc(dout: np.ndarray, cache):
    xp, weight, p = cache
    b, hp, wp, ci = xp.shape
    h, w = hp - 2 * p, wp - 2 * p
    co = weight.shape[0]
    out_h, out_w = dout.shape[1], dout.shape[2]

    # Weight gradient: pair tap (u, v) by sliding the flattened padded input
    # against the output embedded one row/col in; boundary crossings land on
    # zero rows of the embedding.
    d_embed = np.zeros((b, hp, wp, co), dtype=dout.dtype)
    d_embed[:, 1 : 1 + out_h, 1 : 1 + out_w, :] = dout
    m = xp.reshape(-1, ci)
    dflat = d_embed.reshape(-1, co)
    n = m.shape[0]
    dw = np.empty_like(weight)
    for t in range(9):
        u, v = divmod(t, 3)
        off = (u - 1) * wp + (v - 1)
        if off >= 0:
            prod = m[off:].T @ dflat[: n - off]
        else:
            prod = m[:off].T @ dflat[-off:]
        dw[:, :, u, v] = prod.T
    db = dout.sum(axis=(0, 1, 2))

    # Input gradient: convolution of the output gradient with the
    # channel-transposed, spatially flipped weights.
    shift = 2 - p
    if shift == 1:
        d_canvas = d_embed  # same embedding when padding is 1
    else:
        d_canvas = np.zeros((b, h + 2, w + 2, co), dtype=dout.dtype)
        d_canvas[:, shift : shift + out_h, shift : shift + out_w, :] = dout
    w_back = weight.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
    dx = _conv_core(d_canvas, w_back, h, w)
    return dx, dw, db


def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, padding: int = 1):
    if x.ndim != 4:
        raise ValueError(f"expected (batch, channels, h, w) input, got shape {x.shape}")
    out, cache = conv2d_forward_nhwc(x.transpose(0, 2, 3, 1), weight, bias, padding)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2)), cache


def conv2d_backward(dout: np.ndarray, cache):
    dx, dw, db = conv2d_backward_nhwc(dout.transpose(0, 2, 3, 1), cache)
    return np.ascontiguousarray(dx.transpose(0, 3, 1, 2)), dw, db


def leaky_relu_forward(x: np.ndarray, slope: float = 0.2):
    # Subgradient at exactly 0 takes the positive branch.
    neg = x < 0
    out = np.where(neg, x * x.dtype.type(slope), x)
    return out, (neg, slope)


def leaky_relu_backward(dout: np.ndarray, cache):
    neg, slope = cache
    return np.where(neg, dout * dout.dtype.type(slope), dout)


def upsample2x_forward(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbor x2 upsampling (no cache needed)."""
    return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)


def upsample2x_backward(dout: np.ndarray) -> np.ndarray:
    b, c, h2, w2 = dout.shape
    return dout.reshape(b, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))


def upsample2x_forward_nhwc(x: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def upsample2x_backward_nhwc(dout: np.ndarray) -> np.ndarray:
    b, h2, w2, c = dout.shape
    return dout.reshape(b, h2 // 2, 2, w2 // 2, 2, c).sum(axis=(2, 4))


def maxpool2x2_forward(x: np.ndarray):
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool 2x2 needs even spatial dims, got {x.shape}")
    cells = (
        x.reshape(b, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, h // 2, w // 2, 4)
    )
    idx = cells.argmax(axis=-1)  # ties resolve to the first maximum
    out = np.take_along_axis(cells, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def maxpool2x2_backward(dout: np.ndarray, cache):
    idx, in_shape = cache
    b, c, h, w = in_shape
    dcells = np.zeros((b, c, h // 2, w // 2, 4), dtype=dout.dtype)
    np.put_along_axis(dcells, idx[..., None], dout[..., None], axis=-1)
    return (
        dcells.reshape(b, c, h // 2, w // 2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, h, w)
    )


def maxpool2x2_forward_nhwc(x: np.ndarray):
    b, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool 2x2 needs even spatial dims, got {x.shape}")
    cells = (
        x.reshape(b, h // 2, 2, w // 2, 2, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(b, h // 2, w // 2, 4, c)
    )
    idx = cells.argmax(axis=3)  # ties resolve to the first maximum
    out = np.take_along_axis(cells, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    return out, (idx, x.shape)


def maxpool2x2_backward_nhwc(dout: np.ndarray, cache):
    idx, in_shape = cache
    b, h, w, c = in_shape
    dcells = np.zeros((b, h // 2, w // 2, 4, c), dtype=dout.dtype)
    np.put_along_axis(dcells, idx[:, :, :, None, :], dout[:, :, :, None, :], axis=3)
    return (
        dcells.reshape(b, h // 2, w // 2, 2, 2, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(b, h, w, c)
    )


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean of squared differences over all elements."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.astype(np.float64) - target.astype(np.float64)
    return float(np.mean(diff * diff))


def mse_loss_backward(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    return ((pred - target) * pred.dtype.type(2.0 / pred.size)).astype(pred.dtype)


# Value-only views of the same operations.

def conv2d(x, weight, bias, padding: int = 1) -> np.ndarray:
    return conv2d_forward(x, weight, bias, padding)[0]


def leaky_relu(x, slope: float = 0.2) -> np.ndarray:
    return leaky_relu_forward(x, slope)[0]


def upsample2x(x) -> np.ndarray:
    return upsample2x_forward(x)


def maxpool2x2(x) -> np.ndarray:
    return maxpool2x2_forward(x)[0]
