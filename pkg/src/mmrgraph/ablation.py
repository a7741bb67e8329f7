"""Component ablation grids over :class:`VariantSpec` rows."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core.params import INIT_STREAM, make_rng
from .data.batch import stack_bundles
from .data.bundle import Dataset, fold_split
from .data.synth import SynthConfig
from .dims import DESK
from .exceptions import ConfigError
from .metrics import classification_map, retrieval_map
from .nn.network import MMRNetwork, VariantSpec, batch_forward_probs, build_variant
from .optim import TrainConfig, train

logger = logging.getLogger(__name__)

def _v(name, **flags) -> VariantSpec:
    return VariantSpec(name=name, **flags)


# Rows of the component ablation, top to bottom.
COMPONENT_VARIANTS = (
    _v("G_f", use_global="raw", use_local=False, use_text=False, use_bboxes=False, use_mmr=False),
    _v("G_fa", use_local=False, use_text=False, use_bboxes=False, use_mmr=False),
    _v("G_fa + V_f", use_text=False, use_bboxes=False, use_mmr=False),
    _v("G_fa + V_f + T_f", use_bboxes=False, use_mmr=False),
    _v("G_fa + V_f + T_f + bboxes", use_mmr=False),
    _v("V_f + T_f + bboxes (MMR)", use_global="off"),
    _v("G_fa + V_f (MMR)", use_text=False, use_bboxes=False),
    _v("G_fa + V_f + T_f (MMR)", use_bboxes=False),
    _v("full", use_mmr=True),
)

# Single-modality baselines.
MODALITY_VARIANTS = (
    _v("visual only", use_text=False, use_bboxes=False, use_mmr=False),
    _v("text only", use_global="off", use_local=False, use_bboxes=False, use_mmr=False),
)

PROJECTION_VARIANTS = (
    _v("full, mean pooling"),
    _v("full, attention pooling", projection="attention"),
)

# The five rows whose classification mAP should increase monotonically.
ORDERING_VARIANTS = (
    COMPONENT_VARIANTS[1],
    COMPONENT_VARIANTS[2],
    COMPONENT_VARIANTS[3],
    COMPONENT_VARIANTS[4],
    COMPONENT_VARIANTS[8],
)

# Synthetic set and schedule on which the desk-scale grid separates the
# variants: all three signal channels active, with position carrying the
# strongest cue so that graph reasoning over boxes pays off.
DESK_ABLATION_SYNTH = SynthConfig(
    num_classes=4,
    samples_per_class=600,
    dims=DESK,
    visual=0.2,
    textual=0.2,
    positional=1.0,
    noise=0.1,
    seed=1,
)
DESK_ABLATION_TRAIN = TrainConfig(
    epochs=45,
    batch_size=16,
    lr=0.01,
    milestones=(30, 40),
    patience=45,
)
DESK_NETWORK_OPTIONS = {"affinity": "row-softmax"}


@dataclass
class GridRow:
    spec: VariantSpec
    classification_map: float
    retrieval_map: float
    runtime: float
    fold_maps: list[float] = field(default_factory=list)
    fold_retrieval: list[float] = field(default_factory=list)

    def to_dict(self, runtime: bool = True) -> dict:
        out = {
            "variant": self.spec.label,
            "spec": self.spec.to_dict(),
            "classification_map": self.classification_map,
            "retrieval_map": self.retrieval_map,
            "fold_classification_map": list(self.fold_maps),
            "fold_retrieval_map": list(self.fold_retrieval),
        }
        if runtime:
            out["runtime_s"] = self.runtime
        return out


@dataclass
class GridResult:
    rows: list[GridRow]

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def by_label(self) -> dict[str, GridRow]:
        return {row.spec.label: row for row in self.rows}

    def to_list(self, runtime: bool = True) -> list[dict]:
        return [row.to_dict(runtime) for row in self.rows]

    def runtimes(self) -> dict[str, float]:
        return {row.spec.label: row.runtime for row in self.rows}


def evaluate_variant(
    spec: VariantSpec,
    dataset: Dataset,
    config: TrainConfig,
    fold: int,
    init_seed: int = 0,
    **network_options,
) -> tuple[float, float, MMRNetwork, object]:
    """Train ``spec`` on the two other folds and score it on ``fold``.

    Returns ``(classification mAP, retrieval mAP, network, params)``.  The
    held-out fold also drives early stopping.
    """
    train_ids, test_ids = fold_split(dataset, fold)
    train_batch = stack_bundles(dataset.subset(train_ids), dataset.dims)
    test_batch = stack_bundles(dataset.subset(test_ids), dataset.dims)
    network = build_variant(spec, dataset.dims, dataset.num_classes, **network_options)
    params = network.init_params(make_rng(init_seed, INIT_STREAM))
    result = train(network, params, train_batch, config, test_batch)
    probs, logits = batch_forward_probs(network, result.params, test_batch)
    scores = probs if spec.descriptor == "probs" else logits
    cls = classification_map(scores, test_batch.labels).map
    ret = retrieval_map(scores, test_batch.labels, test_batch.ids).map
    return cls, ret, network, result.params


def run_grid(
    variants,
    dataset: Dataset,
    config: TrainConfig,
    folds=(0, 1, 2),
    init_seed: int = 0,
    **network_options,
) -> GridResult:
    """Train and score every variant with the same seed, folds and schedule.

    Rows come back in request order; each mAP is the mean over ``folds``.
    """
    variants = list(variants)
    if not variants:
        raise ConfigError("the variant list is empty")
    rows = []
    for spec in variants:
        start = time.perf_counter()
        cls_maps, ret_maps = [], []
        for fold in folds:
            cls, ret, _, _ = evaluate_variant(spec, dataset, config, fold, init_seed, **network_options)
            cls_maps.append(cls)
            ret_maps.append(ret)
        row = GridRow(
            spec=spec,
            classification_map=float(np.mean(cls_maps)),
            retrieval_map=float(np.mean(ret_maps)),
            runtime=time.perf_counter() - start,
            fold_maps=cls_maps,
            fold_retrieval=ret_maps,
        )
        logger.info("%s: mAP %.4f, retrieval %.4f (%.1fs)", spec.label, row.classification_map, row.retrieval_map, row.runtime)
        rows.append(row)
    return GridResult(rows)


def load_grid(path) -> list[VariantSpec]:
    """Read a JSON list of variant records."""
    text = Path(path).read_text()
    try:
        records = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(records, list) or not records:
        raise ConfigError(f"{path}: expected a non-empty JSON list of variant records")
    specs = []
    for i, record in enumerate(records):
        if not isinstance(record, dict):
            raise ConfigError(f"{path}: entry {i} is not an object")
        try:
            specs.append(VariantSpec.from_dict(record))
        except (ConfigError, TypeError) as exc:
            raise ConfigError(f"{path}: entry {i}: {exc}") from None
    return specs


__all__ = [
    "COMPONENT_VARIANTS",
    "DESK_ABLATION_SYNTH",
    "DESK_ABLATION_TRAIN",
    "DESK_NETWORK_OPTIONS",
    "GridResult",
    "GridRow",
    "MODALITY_VARIANTS",
    "ORDERING_VARIANTS",
    "PROJECTION_VARIANTS",
    "VariantSpec",
    "build_variant",
    "evaluate_variant",
    "load_grid",
    "run_grid",
]
