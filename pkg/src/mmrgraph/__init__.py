"""Graph-based multi-modal reasoning for scene-text aware fine-grained classification."""

from .data import Dataset, FeatureBundle, SynthConfig, read_dataset, synth_generate, write_dataset
from .dims import DESK, FULL_SCALE, Dims, resolve_dims
from .estimator import MMRClassifier, check_bundles
from .nn import FULL, MMRNetwork, VariantSpec, build_variant
from .optim import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "DESK",
    "FULL",
    "FULL_SCALE",
    "Dataset",
    "Dims",
    "FeatureBundle",
    "MMRClassifier",
    "MMRNetwork",
    "SynthConfig",
    "TrainConfig",
    "VariantSpec",
    "build_variant",
    "check_bundles",
    "read_dataset",
    "resolve_dims",
    "synth_generate",
    "write_dataset",
]
