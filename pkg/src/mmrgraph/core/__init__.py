from . import ops
from .gradcheck import GradCheckReport, finite_diff_check, relative_error
from .params import LEAKY_GAIN, ParameterStore, is_bias, make_rng, seeded_init
from .tensor import PRIMITIVES, Tape, Tensor, no_tape, primitive_forward, reverse_accumulate

__all__ = [
    "GradCheckReport",
    "LEAKY_GAIN",
    "PRIMITIVES",
    "ParameterStore",
    "Tape",
    "Tensor",
    "finite_diff_check",
    "is_bias",
    "make_rng",
    "no_tape",
    "ops",
    "primitive_forward",
    "relative_error",
    "reverse_accumulate",
    "seeded_init",
]
