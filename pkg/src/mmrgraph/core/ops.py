"""Functional front-end to the primitive catalogue."""

from __future__ import annotations

from .tensor import LEAKY_SLOPE, Tensor, primitive_forward


def matmul(a, b) -> Tensor:
    return primitive_forward("matmul", a, b)


def add(a, b) -> Tensor:
    return primitive_forward("add", a, b)


def subtract(a, b) -> Tensor:
    return primitive_forward("subtract", a, b)


def multiply(a, b) -> Tensor:
    """Elementwise product of equally shaped tensors."""
    return primitive_forward("multiply", a, b)


def broadcast_multiply(a, b) -> Tensor:
    return primitive_forward("broadcast_multiply", a, b)


def concat(tensors, axis: int = -1) -> Tensor:
    return primitive_forward("concat", *tensors, axis=axis)


def reshape(x, shape) -> Tensor:
    return primitive_forward("reshape", x, shape=tuple(shape))


def mean(x, axis: int = -1) -> Tensor:
    return primitive_forward("mean", x, axis=axis)


def sum(x, axis: int = -1) -> Tensor:  # noqa: A001
    return primitive_forward("sum", x, axis=axis)


def transpose(x) -> Tensor:
    """Swap the last two axes."""
    return primitive_forward("transpose", x)


def affine(x, w, b=None) -> Tensor:
    """``x @ w + b`` applied over the last axis; ``b=None`` drops the bias."""
    if b is None:
        return primitive_forward("matmul", x, w)
    return primitive_forward("affine", x, w, b)


def leaky_relu(x, slope: float = LEAKY_SLOPE) -> Tensor:
    return primitive_forward("leaky_relu", x, slope=slope)


def softmax(x, axis: int = -1) -> Tensor:
    return primitive_forward("softmax", x, axis=axis)


def log(x, floor: float | None = None) -> Tensor:
    return primitive_forward("log", x, floor=floor)


def dropout(x, p: float, train: bool, rng=None) -> Tensor:
    if train and p > 0.0:
        return primitive_forward("dropout_train", x, p=p, rng=rng)
    return primitive_forward("dropout_eval", x, p=p)
