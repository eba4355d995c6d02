"""SGD with poly learning-rate decay, and Adam with a fixed learning rate.

Both updates mutate parameter data in place and are fully deterministic:
identical (params, grads, state, config, iteration) produce bit-identical
results.  Weight decay is applied as an additive gradient term ``decay * w``
in both optimizers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError


@dataclass
class SgdConfig:
    lr0: float = 2.5e-4
    momentum: float = 0.9
    weight_decay: float = 5e-4
    power: float = 0.9
    max_iter: int = 2000


@dataclass
class AdamConfig:
    lr: float = 5e-5          # held constant over training
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    weight_decay: float = 5e-4


def poly_lr(config: SgdConfig, iteration: int) -> float:
    """lr0 * (1 - iter/max_iter)^power; valid for 0 <= iter <= max_iter."""
    if iteration < 0 or iteration > config.max_iter:
        raise ValueError(f"poly_lr: iteration {iteration} outside [0, {config.max_iter}]")
    return config.lr0 * (1.0 - iteration / config.max_iter) ** config.power


class SgdState:
    """Per-parameter momentum buffers."""

    def __init__(self, params):
        self.velocity = [np.zeros_like(p.data) for p in params]


def sgd_step(params, grads, state: SgdState, config: SgdConfig, iteration: int):
    """One momentum-SGD step at the poly-decayed learning rate.

    The momentum buffer is updated with the decayed gradient first, then the
    parameters move along the buffer.
    """
    lr = poly_lr(config, iteration)
    for p, g, v in zip(params, grads, state.velocity):
        if g.shape != p.data.shape:
            raise ShapeError("sgd_step", p.data.shape, g.shape)
        gw = g + config.weight_decay * p.data
        v *= config.momentum
        v += gw
        p.data -= lr * v


class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, params):
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0


def adam_step(params, grads, state: AdamState, config: AdamConfig):
    """Standard bias-corrected Adam update at the fixed learning rate."""
    if len(state.m) != len(params):
        raise ValueError(f"adam_step: state holds {len(state.m)} buffers for {len(params)} params")
    state.t += 1
    bc1 = 1.0 - config.beta1 ** state.t
    bc2 = 1.0 - config.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.data.shape or m.shape != p.data.shape:
            raise ShapeError("adam_step", p.data.shape, g.shape)
        gw = g + config.weight_decay * p.data
        m *= config.beta1
        m += (1.0 - config.beta1) * gw
        v *= config.beta2
        v += (1.0 - config.beta2) * gw * gw
        p.data -= config.lr * (m / bc1) / (np.sqrt(v / bc2) + config.eps)


def collect_grads(params) -> list[np.ndarray]:
    """Snapshot gradients off parameter tensors, zeros where none accumulated."""
    out = []
    for p in params:
        out.append(np.zeros_like(p.data) if p.grad is None else p.grad.copy())
    return out


def zero_grads(params):
    for p in params:
        p.zero_grad()
