"""Per-image feature bundles, datasets, padding and fold handling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dims import Dims
from ..exceptions import DimensionMismatchError, FormatError

N_FOLDS = 3


@dataclass
class FeatureBundle:
    """Precomputed inputs for one image.

    Region and text records are stored column-wise: ``region_features`` is
    ``r x d_r`` with matching ``region_bboxes`` (``r x 4``) and optional
    ``region_scores``; texts likewise with ``text_confidences``.  When
    ``image_w``/``image_h`` are set, boxes are in pixels and get normalised
    by :func:`normalize_and_pad`.
    """

    id: str
    label: int
    global_map: np.ndarray
    region_features: np.ndarray
    region_bboxes: np.ndarray
    text_embeddings: np.ndarray
    text_bboxes: np.ndarray
    text_confidences: np.ndarray
    region_scores: np.ndarray | None = None
    image_w: float | None = None
    image_h: float | None = None

    def __post_init__(self):
        order = np.argsort(-np.asarray(self.text_confidences, dtype=np.float64), kind="stable")
        self.text_confidences = np.asarray(self.text_confidences, dtype=np.float64)[order]
        self.text_embeddings = np.asarray(self.text_embeddings, dtype=np.float64)[order]
        self.text_bboxes = np.asarray(self.text_bboxes, dtype=np.float64).reshape(-1, 4)[order]
        self.region_bboxes = np.asarray(self.region_bboxes, dtype=np.float64).reshape(-1, 4)

    @property
    def has_text(self) -> bool:
        return len(self.text_confidences) > 0

    @property
    def n_regions(self) -> int:
        return len(self.region_bboxes)

    @property
    def n_texts(self) -> int:
        return len(self.text_bboxes)


@dataclass
class Dataset:
    bundles: list[FeatureBundle]
    num_classes: int
    folds: dict[str, int]
    dims: Dims
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [b.id for b in self.bundles]
        if len(set(ids)) != len(ids):
            raise FormatError("duplicate bundle ids")
        if set(self.folds) != set(ids):
            raise FormatError("fold assignments must cover exactly the bundle ids")
        for b in self.bundles:
            if not 0 <= b.label < self.num_classes:
                raise FormatError(f"{b.id}: label {b.label} outside [0, {self.num_classes})")
            if self.folds[b.id] not in range(N_FOLDS):
                raise FormatError(f"{b.id}: fold {self.folds[b.id]} outside {{0, 1, 2}}")

    def __len__(self) -> int:
        return len(self.bundles)

    @property
    def labels(self) -> np.ndarray:
        return np.array([b.label for b in self.bundles], dtype=np.int64)

    def subset(self, ids) -> list[FeatureBundle]:
        wanted = set(ids)
        return [b for b in self.bundles if b.id in wanted]


def fold_split(dataset: Dataset, test_fold: int) -> tuple[list[str], list[str]]:
    """``(train_ids, test_ids)`` with test = bundles assigned to ``test_fold``."""
    if test_fold not in range(N_FOLDS):
        raise ValueError(f"test_fold must be 0, 1 or 2, got {test_fold!r}")
    train, test = [], []
    for b in dataset.bundles:
        (test if dataset.folds[b.id] == test_fold else train).append(b.id)
    return train, test


@dataclass
class PaddedBundle:
    regions: np.ndarray  # n x d_r
    region_bboxes: np.ndarray  # n x 4
    texts: np.ndarray  # m x d_t
    text_bboxes: np.ndarray  # m x 4


def _top_rows(scores: np.ndarray | None, count: int, limit: int) -> np.ndarray:
    """Indices of the ``limit`` highest scores, ties by original index, in rank order."""
    if scores is None:
        return np.arange(min(count, limit))
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")[:limit]


def _normalize_boxes(boxes: np.ndarray, bundle: FeatureBundle) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    if np.any(boxes[:, 2] < boxes[:, 0]) or np.any(boxes[:, 3] < boxes[:, 1]):
        raise ValueError(f"{bundle.id}: degenerate bbox (x2 < x1 or y2 < y1)")
    if bundle.image_w is not None and bundle.image_h is not None:
        scale = np.array([bundle.image_w, bundle.image_h, bundle.image_w, bundle.image_h], dtype=np.float64)
        boxes = boxes / scale
    if boxes.size and (boxes.min() < 0.0 or boxes.max() > 1.0):
        raise ValueError(f"{bundle.id}: bbox coordinates fall outside [0, 1] after normalisation")
    return boxes


def _pad(rows: np.ndarray, count: int, width: int) -> np.ndarray:
    out = np.zeros((count, width), dtype=np.float64)
    out[: len(rows)] = rows
    return out


def normalize_and_pad(bundle: FeatureBundle, dims: Dims) -> PaddedBundle:
    """Normalise boxes to [0, 1], keep the top-n regions / top-m texts, zero-pad the rest."""
    r_idx = _top_rows(bundle.region_scores, bundle.n_regions, dims.n)
    t_idx = _top_rows(bundle.text_confidences, bundle.n_texts, dims.m)
    r_boxes = _normalize_boxes(bundle.region_bboxes, bundle)[r_idx]
    t_boxes = _normalize_boxes(bundle.text_bboxes, bundle)[t_idx]
    r_feat = np.asarray(bundle.region_features, dtype=np.float64).reshape(-1, dims.d_r)[r_idx]
    t_feat = np.asarray(bundle.text_embeddings, dtype=np.float64).reshape(-1, dims.d_t)[t_idx]
    return PaddedBundle(
        regions=_pad(r_feat, dims.n, dims.d_r),
        region_bboxes=_pad(r_boxes, dims.n, 4),
        texts=_pad(t_feat, dims.m, dims.d_t),
        text_bboxes=_pad(t_boxes, dims.m, 4),
    )


def validate_bundle(bundle: FeatureBundle, dims: Dims) -> None:
    """Raise :class:`DimensionMismatchError` naming the bundle on any shape disagreement."""

    def expect(name, arr, shape):
        arr = np.asarray(arr)
        if arr.ndim != len(shape) or any(s is not None and a != s for a, s in zip(arr.shape, shape)):
            raise DimensionMismatchError(f"{bundle.id}: {name} has shape {arr.shape}, expected {shape}")

    expect("global_map", bundle.global_map, (dims.h, dims.w, dims.d_g))
    r = bundle.n_regions
    t = bundle.n_texts
    expect("region_features", bundle.region_features, (r, dims.d_r))
    expect("text_embeddings", bundle.text_embeddings, (t, dims.d_t))
    expect("text_confidences", bundle.text_confidences, (t,))
    if bundle.region_scores is not None:
        expect("region_scores", bundle.region_scores, (r,))
