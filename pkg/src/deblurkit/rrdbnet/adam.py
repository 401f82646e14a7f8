"""Adam with bias correction over name-keyed parameter dicts.

``adam_step`` is pure: it returns fresh params/state so identical inputs
always give identical outputs, which keeps training runs replayable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NonFiniteGradientError(RuntimeError):
    pass


@dataclass
class AdamState:
    t: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]


def adam_init(params: dict[str, np.ndarray]) -> AdamState:
    zeros = lambda: {k: np.zeros_like(p) for k, p in params.items()}
    return AdamState(t=0, m=zeros(), v=zeros())


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float = 1e-4,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> tuple[dict[str, np.ndarray], AdamState]:
    missing = set(params) - set(grads)
    if missing:
        raise KeyError(f"gradients missing for parameters: {sorted(missing)}")
    b1, b2 = betas
    t = state.t + 1
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_p: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = grads[name].astype(p.dtype, copy=False)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for parameter {name!r}")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * (g * g)
        step = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_p[name] = p - step.astype(p.dtype, copy=False)
        new_m[name] = m
        new_v[name] = v
    return new_p, AdamState(t=t, m=new_m, v=new_v)
