"""Stack padded bundles into the dense arrays the network consumes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dims import Dims
from .bundle import FeatureBundle, normalize_and_pad, validate_bundle


@dataclass
class Batch:
    global_maps: np.ndarray  # N x h x w x d_g
    regions: np.ndarray  # N x n x d_r
    region_bboxes: np.ndarray  # N x n x 4
    texts: np.ndarray  # N x m x d_t
    text_bboxes: np.ndarray  # N x m x 4
    labels: np.ndarray  # N, int64 (-1 when unknown)
    has_text: np.ndarray  # N, bool
    ids: list[str]

    def __len__(self) -> int:
        return len(self.ids)

    def take(self, index) -> "Batch":
        index = np.asarray(index)
        return Batch(
            global_maps=self.global_maps[index],
            regions=self.regions[index],
            region_bboxes=self.region_bboxes[index],
            texts=self.texts[index],
            text_bboxes=self.text_bboxes[index],
            labels=self.labels[index],
            has_text=self.has_text[index],
            ids=[self.ids[i] for i in index],
        )


def stack_bundles(bundles: list[FeatureBundle], dims: Dims) -> Batch:
    padded = []
    for b in bundles:
        validate_bundle(b, dims)
        padded.append(normalize_and_pad(b, dims))
    n = len(bundles)
    return Batch(
        global_maps=np.stack([np.asarray(b.global_map, dtype=np.float64) for b in bundles])
        if n
        else np.zeros((0, dims.h, dims.w, dims.d_g)),
        regions=np.stack([p.regions for p in padded]) if n else np.zeros((0, dims.n, dims.d_r)),
        region_bboxes=np.stack([p.region_bboxes for p in padded]) if n else np.zeros((0, dims.n, 4)),
        texts=np.stack([p.texts for p in padded]) if n else np.zeros((0, dims.m, dims.d_t)),
        text_bboxes=np.stack([p.text_bboxes for p in padded]) if n else np.zeros((0, dims.m, 4)),
        labels=np.array([b.label for b in bundles], dtype=np.int64),
        has_text=np.array([b.has_text for b in bundles], dtype=bool),
        ids=[b.id for b in bundles],
    )
