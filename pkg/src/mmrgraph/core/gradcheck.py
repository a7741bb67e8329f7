"""Central finite-difference gradient oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..exceptions import GradientCheckError
from .params import ParameterStore
from .tensor import Tape, Tensor, no_tape, reverse_accumulate

REL_FLOOR = 1e-12


def relative_error(fd: np.ndarray, ad: np.ndarray) -> float:
    """``max|fd - ad| / (max|fd| + max|ad| + 1e-12)`` over one parameter tensor."""
    fd = np.asarray(fd, dtype=np.float64)
    ad = np.asarray(ad, dtype=np.float64)
    if fd.size == 0:
        return 0.0
    num = float(np.max(np.abs(fd - ad)))
    return num / (float(np.max(np.abs(fd))) + float(np.max(np.abs(ad))) + REL_FLOOR)


@dataclass
class GradCheckReport:
    step: float
    tol: float
    errors: dict[str, float] = field(default_factory=dict)
    n_scalars: int = 0

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tol

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "tol": self.tol,
            "n_scalars": self.n_scalars,
            "max_relative_error": self.max_error,
            "passed": self.passed,
            "per_parameter": dict(self.errors),
        }


def tape_gradients(f: Callable[[dict[str, Tensor]], Tensor], params: ParameterStore) -> tuple[float, dict[str, np.ndarray]]:
    with Tape() as tape:
        leaves = params.watch(tape)
        loss = f(leaves)
    if loss.tape is not tape:
        # loss never touched a parameter
        return loss.item(), {name: np.zeros_like(params[name]) for name in leaves}
    grads = reverse_accumulate(tape, loss)
    return loss.item(), {name: grads[t.node] for name, t in leaves.items()}


def finite_diff_check(
    f: Callable[[dict[str, Tensor]], Tensor],
    params: ParameterStore,
    step: float = 1e-6,
    tol: float = 1e-6,
    names=None,
) -> GradCheckReport:
    """Compare tape gradients of ``f`` with central differences, scalar by scalar.

    ``f`` maps a ``name -> Tensor`` dict to a scalar loss tensor and must be
    deterministic (dropout off, fixed data).
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    base, ad = tape_gradients(f, params)

    def evaluate(values: dict[str, np.ndarray]) -> float:
        with no_tape():
            return f({k: Tensor(v) for k, v in values.items()}).item()

    work = {k: v.copy() for k, v in params.items()}
    again = evaluate(work)
    if again != base:
        raise GradientCheckError(f"f is not deterministic: {base!r} then {again!r}")

    report = GradCheckReport(step=step, tol=tol)
    for name in names if names is not None else list(params):
        theta = work[name]
        flat = theta.reshape(-1)
        fd = np.empty_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = evaluate(work)
            flat[i] = orig - step
            down = evaluate(work)
            flat[i] = orig
            fd[i] = (up - down) / (2.0 * step)
        report.errors[name] = relative_error(fd, ad[name].reshape(-1))
        report.n_scalars += flat.size
    return report
