"""Training objectives: segmentation cross-entropy, classifier weight
discrepancy, and the adversarial pair with per-pixel adaptive weighting.

The adaptive weight map is built from the two heads' per-pixel disagreement
(cosine distance of the probability vectors) and enters both adversarial
losses as a constant: gradients flow through the discriminator scores only,
never through the weight map itself.

All pixel losses are means over pixels (and batch), not sums, so the lambda
weights are resolution-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import NORM_FLOOR, Tensor


@dataclass
class DiscrepancyMap:
    """Per-pixel cosine distance between the two heads, values in [0, 2];
    shape (1, H, W), or (N, 1, H, W) for batched predictions."""
    values: np.ndarray


@dataclass
class AdaptiveWeightMap:
    """lambda_local * discrepancy + epsilon, frozen (constant under autodiff)."""
    values: Tensor
    lambda_local: float
    epsilon: float


@dataclass
class LossBundle:
    seg: float
    weight_disc: float
    adv_g: float
    adv_d: float
    total_g: float


def _split_channel_axis(t) -> int:
    data = t.data if isinstance(t, Tensor) else np.asarray(t)
    if data.ndim == 3:
        return 0
    if data.ndim == 4:
        return 1
    raise T.ShapeError("channel_axis", data.shape)


def seg_loss(ensemble: Tensor, labels) -> Tensor:
    """Mean over pixels of -log p(true class).

    ``labels`` is an (H, W) or (N, H, W) integer map; every entry must lie in
    [0, C) or the error names the offending pixel.
    """
    axis = _split_channel_axis(ensemble)
    labels = np.asarray(labels)
    num_classes = ensemble.data.shape[axis]
    expected = ensemble.data.shape[:axis] + ensemble.data.shape[axis + 1:]
    if labels.shape != expected:
        raise T.ShapeError("seg_loss", ensemble.data.shape, labels.shape)
    bad = (labels < 0) | (labels >= num_classes)
    if bad.any():
        coord = tuple(int(c) for c in np.argwhere(bad)[0])
        raise ValueError(f"seg_loss: label {int(labels[coord])} out of range "
                         f"[0, {num_classes}) at pixel {coord}")
    onehot = np.moveaxis(np.eye(num_classes)[labels], -1, axis)
    picked = T.mul(T.log(ensemble), Tensor(onehot))
    n_pixels = labels.size
    return T.mul(T.sum(picked), -1.0 / n_pixels)


def weight_discrepancy_loss(w1: Tensor, w2: Tensor) -> Tensor:
    """Cosine similarity of the flattened head weights (minimized to keep the
    two classifiers diverse); carries the degenerate flag from the primitive."""
    return T.cosine_similarity(w1, w2)


def discrepancy_map(p1, p2) -> DiscrepancyMap:
    """Per-pixel 1 - cos(p1, p2) over the channel axis, as plain values.

    Computed outside the tape: downstream use is always through the frozen
    adaptive weight map.
    """
    a = p1.data if isinstance(p1, Tensor) else np.asarray(p1)
    b = p2.data if isinstance(p2, Tensor) else np.asarray(p2)
    if a.shape != b.shape:
        raise T.ShapeError("discrepancy_map", a.shape, b.shape)
    axis = _split_channel_axis(p1)
    na = np.linalg.norm(a, axis=axis, keepdims=True)
    nb = np.linalg.norm(b, axis=axis, keepdims=True)
    denom = na * nb
    dot = np.sum(a * b, axis=axis, keepdims=True)
    cos = np.where(denom > NORM_FLOOR, dot / np.maximum(denom, NORM_FLOOR), 0.0)
    return DiscrepancyMap(1.0 - np.clip(cos, -1.0, 1.0))


def adaptive_weight_map(m: DiscrepancyMap, lambda_local: float, epsilon: float) -> AdaptiveWeightMap:
    """lambda_local * m + epsilon wrapped as a constant tensor (stop-gradient)."""
    if lambda_local < 0:
        raise ValueError(f"adaptive_weight_map: lambda_local must be >= 0, got {lambda_local}")
    if epsilon <= 0:
        raise ValueError(f"adaptive_weight_map: epsilon must be > 0, got {epsilon}")
    values = Tensor(lambda_local * m.values + epsilon)
    return AdaptiveWeightMap(values, lambda_local, epsilon)


def adv_loss_generator(d_out_target: Tensor, w: AdaptiveWeightMap) -> Tensor:
    """Weighted non-saturating fooling loss on target: mean of w * (-log D).

    Pushes target scores toward the source label; gradients reach the
    generator through ``d_out_target`` only.
    """
    return T.mean(T.mul(w.values, -T.log(d_out_target)))


def adv_loss_discriminator(d_src: Tensor, d_tgt: Tensor, w: AdaptiveWeightMap) -> Tensor:
    """Binary cross-entropy for the discriminator: source toward 1 (unweighted),
    target toward 0 with the adaptive per-pixel weight."""
    src_term = T.mean(-T.log(d_src))
    tgt_term = T.mean(T.mul(w.values, -T.log(T.sub(1.0, d_tgt))))
    return T.add(src_term, tgt_term)


def total_generator_loss(seg: Tensor, weight_disc: Tensor, adv_g: Tensor,
                         lambda_weight: float, lambda_adv: float) -> Tensor:
    """seg + lambda_weight * weight_disc + lambda_adv * adv_g."""
    return T.add(seg, T.add(T.mul(weight_disc, lambda_weight), T.mul(adv_g, lambda_adv)))
