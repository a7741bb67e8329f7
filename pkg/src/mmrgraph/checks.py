"""Whole-model gradient check used by the ``gradcheck`` subcommand and tests."""

from __future__ import annotations

import time

from .core.gradcheck import GradCheckReport, finite_diff_check
from .core.params import ParameterStore, is_bias, make_rng
from .data.batch import Batch
from .nn.network import MMRNetwork

BIAS_STREAM = 11
DROPOUT_STREAM = 12


def perturb_biases(params: ParameterStore, rng, scale: float = 0.5) -> ParameterStore:
    """Copy of ``params`` with biases drawn from ``U(-scale, scale)``.

    Zero-padded rows hit every Leaky ReLU at exactly 0 when biases are zero,
    and a central difference straddling the kink disagrees with either
    one-sided derivative.  Random biases move those rows off the kink.
    """
    out = params.copy()
    for name in out:
        if is_bias(name):
            out[name] = rng.uniform(-scale, scale, size=out[name].shape)
    return out


def model_gradcheck(
    network: MMRNetwork,
    params: ParameterStore,
    batch: Batch,
    seed: int = 0,
    step: float = 1e-6,
    tol: float = 1e-6,
) -> tuple[GradCheckReport, float]:
    """Finite-difference check of the training loss over every parameter.

    Dropout stays on, with its mask regenerated from the same seed at each
    evaluation, so the masked path is checked too.  Returns the report and
    the wall time in seconds.
    """
    params = perturb_biases(params, make_rng(seed, BIAS_STREAM))

    def loss(p):
        return network.loss(p, batch, train=True, rng=make_rng(seed, DROPOUT_STREAM))

    start = time.perf_counter()
    report = finite_diff_check(loss, params, step=step, tol=tol)
    return report, time.perf_counter() - start
