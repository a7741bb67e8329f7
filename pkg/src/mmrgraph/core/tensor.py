"""Dense float64 tensors with a reverse-mode autodiff tape.

A :class:`Tape` records every primitive applied while it is active.  Tensors
created outside a tape (or from plain arrays) are constants and receive no
gradient.  All arithmetic is binary64; any NaN/Inf produced by a primitive is
a hard error.

Example
-------
>>> with Tape() as tape:
...     x = tape.watch(np.array([2.0]))
...     y = tape.watch(np.array([5.0]))
...     loss = ops.sum(ops.multiply(x, y), axis=0)
>>> grads = reverse_accumulate(tape, loss)
"""

from __future__ import annotations

import contextvars
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from ..exceptions import NonFiniteError, ShapeError, TapeError, UnknownOpError

LEAKY_SLOPE = 0.01

_active_tape: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar(
    "mmrgraph_active_tape", default=None
)


class Tensor:
    """Immutable float64 array, optionally bound to a node on a tape."""

    __slots__ = ("data", "node", "tape")

    def __init__(self, data, node: int | None = None, tape: "Tape | None" = None):
        # a view, so freezing it never touches the caller's array
        arr = np.asarray(data, dtype=np.float64).view()
        arr.setflags(write=False)
        self.data = arr
        self.node = node
        self.tape = tape

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return np.array(self.data)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_not_scalar(self)

    def __repr__(self) -> str:
        tag = f", node={self.node}" if self.node is not None else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __matmul__(self, other):
        return primitive_forward("matmul", self, other)

    def __add__(self, other):
        return primitive_forward("add", self, other)

    def __sub__(self, other):
        return primitive_forward("subtract", self, other)

    def __mul__(self, other):
        return primitive_forward("broadcast_multiply", self, other)


def _raise_not_scalar(t: Tensor):
    raise ShapeError(f"item() needs a single-element tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------


@dataclass
class Record:
    op: str
    inputs: list[int | None]
    consts: list[np.ndarray | None]
    output: int
    attrs: dict[str, Any]
    saved: Any = None


@dataclass
class Tape:
    """Ordered log of primitive applications.

    Node ids are indices into ``values``; a record's inputs always refer to
    smaller ids than its output, so the record list is topologically sorted.
    """

    records: list[Record] = field(default_factory=list)
    values: list[np.ndarray] = field(default_factory=list)
    leaves: list[int] = field(default_factory=list)
    _token: Any = field(default=None, repr=False)

    def __enter__(self) -> "Tape":
        if self._token is not None:
            raise TapeError("tape is already active")
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _active_tape.reset(self._token)
        self._token = None

    def watch(self, data) -> Tensor:
        """Register ``data`` as a differentiable leaf."""
        arr = np.array(data, dtype=np.float64)
        node = self._new_node(arr)
        self.leaves.append(node)
        return Tensor(arr, node=node, tape=self)

    def _new_node(self, arr: np.ndarray) -> int:
        self.values.append(arr)
        return len(self.values) - 1

    def replay(self) -> list[np.ndarray]:
        """Recompute every recorded value from the leaves and saved state."""
        values: list[np.ndarray | None] = [None] * len(self.values)
        for leaf in self.leaves:
            values[leaf] = self.values[leaf]
        for rec in self.records:
            args = [values[i] if i is not None else c for i, c in zip(rec.inputs, rec.consts)]
            prim = PRIMITIVES[rec.op]
            out = prim.replay(args, rec.attrs, rec.saved)
            values[rec.output] = out
        return values  # type: ignore[return-value]


def active_tape() -> Tape | None:
    return _active_tape.get()


class no_tape:
    """Context manager that suspends recording (evaluation / finite differences)."""

    def __enter__(self):
        self._token = _active_tape.set(None)
        return self

    def __exit__(self, *exc):
        _active_tape.reset(self._token)


# ---------------------------------------------------------------------------
# Primitive catalogue
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Primitive:
    name: str
    forward: Callable[..., tuple[np.ndarray, Any]]
    backward: Callable[..., Sequence[np.ndarray | None]]

    def replay(self, args, attrs, saved):
        if self.name == "dropout_train":
            return args[0] * saved
        out, _ = self.forward(*args, **attrs)
        return out


PRIMITIVES: dict[str, Primitive] = {}


def _primitive(name):
    def register(pair):
        fwd, bwd = pair()
        PRIMITIVES[name] = Primitive(name, fwd, bwd)
        return pair

    return register


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: np.ndarray, b: np.ndarray, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


@_primitive("matmul")
def _matmul():
    def fwd(a, b):
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
        return np.matmul(a, b), None

    def bwd(g, a, b, out, saved):
        return (_unbroadcast(np.matmul(g, _swap(b)), a.shape), _unbroadcast(np.matmul(_swap(a), g), b.shape))

    return fwd, bwd


@_primitive("add")
def _add():
    def fwd(a, b):
        _check_broadcast(a, b, "add")
        return a + b, None

    def bwd(g, a, b, out, saved):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return fwd, bwd


@_primitive("subtract")
def _subtract():
    def fwd(a, b):
        _check_broadcast(a, b, "subtract")
        return a - b, None

    def bwd(g, a, b, out, saved):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return fwd, bwd


@_primitive("multiply")
def _multiply():
    def fwd(a, b):
        if a.shape != b.shape:
            raise ShapeError(f"multiply: shapes {a.shape} and {b.shape} differ")
        return a * b, None

    def bwd(g, a, b, out, saved):
        return g * b, g * a

    return fwd, bwd


@_primitive("broadcast_multiply")
def _broadcast_multiply():
    def fwd(a, b):
        _check_broadcast(a, b, "broadcast_multiply")
        return a * b, None

    def bwd(g, a, b, out, saved):
        return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

    return fwd, bwd


@_primitive("concat")
def _concat():
    def fwd(*xs, axis=-1):
        ref = xs[0]
        ax = axis % ref.ndim
        for x in xs[1:]:
            if x.ndim != ref.ndim or any(
                x.shape[i] != ref.shape[i] for i in range(ref.ndim) if i != ax
            ):
                raise ShapeError(f"concat: {x.shape} does not conform to {ref.shape} on axis {axis}")
        return np.concatenate(xs, axis=axis), None

    def bwd(g, *args, axis=-1):
        xs = args[:-2]
        splits = np.cumsum([x.shape[axis] for x in xs])[:-1]
        return np.split(g, splits, axis=axis)

    return fwd, bwd


@_primitive("reshape")
def _reshape():
    def fwd(x, shape=()):
        try:
            return x.reshape(shape), None
        except ValueError:
            raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from None

    def bwd(g, x, out, saved, shape=()):
        return (g.reshape(x.shape),)

    return fwd, bwd


@_primitive("mean")
def _mean():
    def fwd(x, axis=-1):
        return x.mean(axis=axis), None

    def bwd(g, x, out, saved, axis=-1):
        ax = axis % x.ndim
        return (np.broadcast_to(np.expand_dims(g, ax), x.shape) / x.shape[ax],)

    return fwd, bwd


@_primitive("sum")
def _sum():
    def fwd(x, axis=-1):
        return x.sum(axis=axis), None

    def bwd(g, x, out, saved, axis=-1):
        ax = axis % x.ndim
        return (np.broadcast_to(np.expand_dims(g, ax), x.shape).copy(),)

    return fwd, bwd


@_primitive("transpose")
def _transpose():
    def fwd(x):
        if x.ndim < 2:
            raise ShapeError(f"transpose: need rank >= 2, got {x.shape}")
        return _swap(x).copy(), None

    def bwd(g, x, out, saved):
        return (_swap(g),)

    return fwd, bwd


@_primitive("affine")
def _affine():
    def fwd(x, w, b):
        if w.ndim != 2 or b.shape != (w.shape[1],) or x.shape[-1] != w.shape[0]:
            raise ShapeError(f"affine: x {x.shape}, W {w.shape}, bias {b.shape} do not conform")
        return np.matmul(x, w) + b, None

    def bwd(g, x, w, b, out, saved):
        gx = np.matmul(g, w.T)
        x2 = x.reshape(-1, x.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        return gx, x2.T @ g2, g2.sum(axis=0)

    return fwd, bwd


@_primitive("leaky_relu")
def _leaky_relu():
    def fwd(x, slope=LEAKY_SLOPE):
        return np.where(x > 0, x, slope * x), None

    def bwd(g, x, out, saved, slope=LEAKY_SLOPE):
        return (np.where(x > 0, g, slope * g),)

    return fwd, bwd


@_primitive("softmax")
def _softmax():
    def fwd(x, axis=-1):
        z = x - x.max(axis=axis, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=axis, keepdims=True), None

    def bwd(g, x, out, saved, axis=-1):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return fwd, bwd


@_primitive("log")
def _log():
    def fwd(x, floor=None):
        if floor is not None:
            return np.log(np.maximum(x, floor)), None
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(x), None

    def bwd(g, x, out, saved, floor=None):
        if floor is None:
            return (g / x,)
        safe = np.maximum(x, floor)
        return (np.where(x > floor, g / safe, 0.0),)

    return fwd, bwd


@_primitive("dropout_train")
def _dropout_train():
    def fwd(x, p=0.0, rng=None):
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {p}")
        if rng is None:
            raise ValueError("dropout_train needs an rng")
        keep = rng.random(x.shape) >= p
        mask = keep / (1.0 - p)
        return x * mask, mask

    def bwd(g, x, out, saved, p=0.0, rng=None):
        return (g * saved,)

    return fwd, bwd


@_primitive("dropout_eval")
def _dropout_eval():
    def fwd(x, p=0.0):
        return x, None

    def bwd(g, x, out, saved, p=0.0):
        return (g,)

    return fwd, bwd


def primitive_forward(op: str, *inputs, **attrs) -> Tensor:
    """Apply primitive ``op`` and record it on the active tape, if any."""
    try:
        prim = PRIMITIVES[op]
    except KeyError:
        raise UnknownOpError(f"unknown primitive {op!r}") from None
    tensors = [as_tensor(x) for x in inputs]
    arrays = [t.data for t in tensors]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        # non-finite results are rejected just below
        out, saved = prim.forward(*arrays, **attrs)
    out = np.asarray(out, dtype=np.float64)
    if not np.isfinite(out).all():
        raise NonFiniteError(f"{op} produced a non-finite value")
    tape = _active_tape.get()
    on_tape = [t.tape is tape and t.node is not None for t in tensors]
    if tape is None or not any(on_tape):
        return Tensor(out)
    node = tape._new_node(out)
    if op == "dropout_train":
        attrs = {k: v for k, v in attrs.items() if k != "rng"}
    tape.records.append(
        Record(
            op=op,
            inputs=[t.node if live else None for t, live in zip(tensors, on_tape)],
            consts=[None if live else t.data for t, live in zip(tensors, on_tape)],
            output=node,
            attrs=attrs,
            saved=saved,
        )
    )
    return Tensor(out, node=node, tape=tape)


def reverse_accumulate(tape: Tape, loss: Tensor) -> dict[int, np.ndarray]:
    """Gradient of scalar ``loss`` with respect to every node on ``tape``.

    Nodes the loss does not depend on (including untouched leaves) map to
    zero arrays.
    """
    if loss.data.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
    if loss.tape is not tape or loss.node is None:
        raise TapeError("loss was not produced on this tape")
    grads: list[np.ndarray | None] = [None] * len(tape.values)
    grads[loss.node] = np.ones_like(tape.values[loss.node])
    for rec in reversed(tape.records):
        g = grads[rec.output]
        if g is None:
            continue
        args = [tape.values[i] if i is not None else c for i, c in zip(rec.inputs, rec.consts)]
        in_grads = PRIMITIVES[rec.op].backward(g, *args, tape.values[rec.output], rec.saved, **rec.attrs)
        for node, ig in zip(rec.inputs, in_grads):
            if node is None or ig is None:
                continue
            grads[node] = ig if grads[node] is None else grads[node] + ig
    return {
        i: (g if g is not None else np.zeros_like(tape.values[i])) for i, g in enumerate(grads)
    }
