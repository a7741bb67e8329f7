from .batch import Batch, stack_bundles
from .bundle import (
    Dataset,
    FeatureBundle,
    PaddedBundle,
    fold_split,
    normalize_and_pad,
    validate_bundle,
)
from .manifest import read_dataset, write_dataset
from .mmrt import decode, encode, read_tensor, write_tensor
from .synth import SynthConfig, synth_generate

__all__ = [
    "Batch",
    "Dataset",
    "FeatureBundle",
    "PaddedBundle",
    "SynthConfig",
    "decode",
    "encode",
    "fold_split",
    "normalize_and_pad",
    "read_dataset",
    "read_tensor",
    "stack_bundles",
    "synth_generate",
    "validate_bundle",
    "write_dataset",
    "write_tensor",
]
