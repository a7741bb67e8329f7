"""Node pooling, late fusion, classifier and the cross-entropy objective."""

from __future__ import annotations

import numpy as np

from ..core import ops
from ..core.tensor import Tensor, as_tensor
from ..exceptions import ShapeError

PROB_FLOOR = 1e-12
PROJECTIONS = ("avg", "attention")


def node_project(nodes, mode: str = "avg", scorer_w=None, scorer_b=None) -> Tensor:
    """Pool ``(..., k, D)`` nodes to ``(..., D)`` by mean or softmax attention."""
    nodes = as_tensor(nodes)
    if mode == "avg":
        return ops.mean(nodes, axis=-2)
    if mode == "attention":
        weights = ops.softmax(ops.affine(nodes, scorer_w, scorer_b), axis=-2)  # (..., k, 1)
        return ops.sum(ops.broadcast_multiply(nodes, weights), axis=-2)
    raise ValueError(f"unknown projection mode {mode!r}")


def fuse_classify(parts, fc_w, fc_b, p: float = 0.3, train: bool = False, rng=None):
    """Concatenate the branch vectors, apply dropout (train only), classify.

    Returns ``(probs, logits)``.
    """
    parts = [as_tensor(x) for x in parts if x is not None]
    fused = parts[0] if len(parts) == 1 else ops.concat(parts, axis=-1)
    if fused.shape[-1] != as_tensor(fc_w).shape[0]:
        raise ShapeError(f"fused width {fused.shape[-1]} != classifier input {as_tensor(fc_w).shape[0]}")
    fused = ops.dropout(fused, p, train, rng)
    logits = ops.affine(fused, fc_w, fc_b)
    return ops.softmax(logits, axis=-1), logits


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes})")
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def cross_entropy_loss(probs, labels) -> Tensor:
    """Mean negative log-probability of the true class (probabilities floored at 1e-12)."""
    probs = as_tensor(probs)
    n, c = probs.shape
    target = one_hot(labels, c)
    picked = ops.sum(ops.multiply(ops.log(probs, floor=PROB_FLOOR), Tensor(target)), axis=-1)
    return ops.subtract(Tensor(0.0), ops.mean(picked, axis=0))
