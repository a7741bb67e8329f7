"""Named parameter storage, seeded generators and weight initialisation."""

from __future__ import annotations

import math
from collections.abc import Iterator, MutableMapping

import numpy as np

from .tensor import LEAKY_SLOPE, Tape, Tensor

LEAKY_GAIN = math.sqrt(2.0 / (1.0 + LEAKY_SLOPE**2))

# Sub-stream ids under one run seed.  Training uses 2 (shuffle) and 3 (dropout).
INIT_STREAM = 7


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator keyed by a 64-bit seed and optional sub-stream ids.

    PCG64 with ``SeedSequence`` seeding is fully specified by numpy and gives
    identical streams across platforms.
    """
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *stream])))


def init_bound(fan_in: int, gain: float = 1.0) -> float:
    return gain * math.sqrt(6.0 / fan_in)


def seeded_init(shape, fan_in: int, rng: np.random.Generator, gain: float = 1.0) -> np.ndarray:
    """Uniform(-bound, bound) weights with ``bound = gain * sqrt(6 / fan_in)``.

    Use ``gain=LEAKY_GAIN`` for layers followed by a Leaky ReLU.
    """
    if fan_in < 1:
        raise ValueError(f"fan_in must be >= 1, got {fan_in}")
    bound = init_bound(fan_in, gain)
    return rng.uniform(-bound, bound, size=tuple(shape))


def is_bias(name: str) -> bool:
    return name.endswith(".b")


class ParameterStore(MutableMapping):
    """Ordered ``name -> float64 array`` mapping with optional gradients.

    Names are dotted paths (``"gcn.0.w_g"``); names ending in ``.b`` are
    biases, which weight decay skips.
    """

    def __init__(self, values=None):
        self._values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        for name, value in dict(values or {}).items():
            self[name] = value

    def __getitem__(self, name: str) -> np.ndarray:
        return self._values[name]

    def __setitem__(self, name: str, value) -> None:
        self._values[name] = np.array(value, dtype=np.float64)

    def __delitem__(self, name: str) -> None:
        del self._values[name]
        self.grads.pop(name, None)

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __repr__(self) -> str:
        return f"ParameterStore({self.size} scalars in {len(self)} tensors)"

    @property
    def size(self) -> int:
        return int(sum(v.size for v in self._values.values()))

    def copy(self) -> "ParameterStore":
        return ParameterStore({k: v.copy() for k, v in self._values.items()})

    def as_constants(self) -> dict[str, Tensor]:
        return {k: Tensor(v) for k, v in self._values.items()}

    def watch(self, tape: Tape) -> dict[str, Tensor]:
        return {k: tape.watch(v) for k, v in self._values.items()}

    def equal(self, other: "ParameterStore") -> bool:
        """Bitwise equality of names, shapes and values."""
        if list(self) != list(other):
            return False
        return all(
            self[k].shape == other[k].shape and self[k].tobytes() == other[k].tobytes() for k in self
        )
