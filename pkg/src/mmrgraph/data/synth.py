"""Synthetic feature bundles with per-channel class signal.

Every channel row is ``strength * prototype + (1 - strength) * nuisance +
noise * eps`` for the row that carries signal, and the same expression
without the prototype term for distractor rows.  Channels:

* visual: one cell of the global map and the top region share the
  visual strength but use independent prototypes and nuisance draws;
* textual: the most confident text embedding;
* positional: the offset from the top region's box to the top text's box
  points in a class-specific direction.

The positional signal is relative, so it is invisible to any single box.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..core.params import make_rng
from ..dims import DESK, Dims
from ..exceptions import ConfigError
from .bundle import N_FOLDS, Dataset, FeatureBundle

OFFSET_RADIUS = 0.25


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int = 4
    samples_per_class: int = 30
    dims: Dims = field(default=DESK)
    visual: float = 0.5
    textual: float = 0.5
    positional: float = 0.5
    fraction_with_text: float = 1.0
    noise: float = 0.1
    seed: int = 0
    min_regions: int = 2

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.samples_per_class < 1:
            raise ConfigError("samples_per_class must be >= 1")
        for name in ("visual", "textual", "positional", "fraction_with_text"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.noise < 0:
            raise ConfigError(f"noise must be >= 0, got {self.noise}")
        if self.textual > 0 and self.dims.d_t < self.num_classes:
            raise ConfigError(
                f"d_t = {self.dims.d_t} cannot hold {self.num_classes} orthogonal text prototypes"
            )
        if not 1 <= self.min_regions <= self.dims.n:
            raise ConfigError(f"min_regions must lie in [1, n={self.dims.n}]")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["dims"] = self.dims.to_dict()
        return out


def _prototypes(rng, num_classes: int, width: int) -> np.ndarray:
    return rng.standard_normal((num_classes, width))


def _text_prototypes(rng, num_classes: int, width: int) -> np.ndarray:
    """Orthogonal class prototypes with unit per-coordinate energy."""
    q, _ = np.linalg.qr(rng.standard_normal((width, width)))
    return math.sqrt(width) * q[:, :num_classes].T


def _box_around(cx, cy, half_w, half_h) -> np.ndarray:
    box = np.array([cx - half_w, cy - half_h, cx + half_w, cy + half_h])
    return np.clip(box, 0.0, 1.0)


def _random_box(rng) -> np.ndarray:
    cx, cy = rng.uniform(0.1, 0.9, size=2)
    hw, hh = rng.uniform(0.03, 0.12, size=2)
    return _box_around(cx, cy, hw, hh)


def synth_generate(config: SynthConfig) -> Dataset:
    cfg = config
    d = cfg.dims
    C = cfg.num_classes
    proto_rng = make_rng(cfg.seed, 0)
    proto_global = _prototypes(proto_rng, C, d.d_g)
    proto_region = _prototypes(proto_rng, C, d.d_r)
    proto_text = _text_prototypes(proto_rng, C, d.d_t) if cfg.textual > 0 else np.zeros((C, d.d_t))
    phase = proto_rng.uniform(0, 2 * math.pi)
    angles = phase + 2 * math.pi * np.arange(C) / C
    proto_offset = OFFSET_RADIUS * np.stack([np.cos(angles), np.sin(angles)], axis=1)

    rng = make_rng(cfg.seed, 1)
    # per class: which samples carry text
    n_text = int(round(cfg.fraction_with_text * cfg.samples_per_class))
    text_mask = np.zeros((C, cfg.samples_per_class), dtype=bool)
    for c in range(C):
        text_mask[c, rng.permutation(cfg.samples_per_class)[:n_text]] = True

    def channel(shape, strength):
        return (1.0 - strength) * rng.standard_normal(shape) + cfg.noise * rng.standard_normal(shape)

    bundles, folds = [], {}
    for j in range(cfg.samples_per_class):
        for c in range(C):
            bid = f"s{j * C + c:05d}"
            gmap = channel((d.h, d.w, d.d_g), cfg.visual)
            hi, wi = rng.integers(d.h), rng.integers(d.w)
            gmap[hi, wi] += cfg.visual * proto_global[c]

            n_reg = int(rng.integers(cfg.min_regions, d.n + 1))
            regions = channel((n_reg, d.d_r), cfg.visual)
            regions[0] += cfg.visual * proto_region[c]
            anchor = np.array(rng.uniform(0.3, 0.7, size=2))
            half = rng.uniform(0.05, 0.12, size=2)
            r_boxes = [_box_around(*anchor, *half)] + [_random_box(rng) for _ in range(n_reg - 1)]

            if text_mask[c, j]:
                n_txt = int(rng.integers(1, d.m + 1))
                texts = channel((n_txt, d.d_t), cfg.textual)
                texts[0] += cfg.textual * proto_text[c]
                theta = rng.uniform(0, 2 * math.pi)
                nuisance = OFFSET_RADIUS * np.array([math.cos(theta), math.sin(theta)])
                offset = cfg.positional * proto_offset[c] + (1.0 - cfg.positional) * nuisance
                offset = offset + cfg.noise * OFFSET_RADIUS * rng.standard_normal(2)
                t_half = rng.uniform(0.03, 0.08, size=2)
                t_boxes = [_box_around(*(anchor + offset), *t_half)] + [
                    _random_box(rng) for _ in range(n_txt - 1)
                ]
                conf = np.concatenate([[rng.uniform(0.9, 1.0)], rng.uniform(0.3, 0.85, size=n_txt - 1)])
            else:
                texts = np.zeros((0, d.d_t))
                t_boxes = []
                conf = np.zeros(0)
            bundles.append(
                FeatureBundle(
                    id=bid,
                    label=c,
                    global_map=gmap,
                    region_features=regions,
                    region_bboxes=np.array(r_boxes).reshape(-1, 4),
                    text_embeddings=texts,
                    text_bboxes=np.array(t_boxes).reshape(-1, 4),
                    text_confidences=conf,
                )
            )
            folds[bid] = j % N_FOLDS
    return Dataset(bundles=bundles, num_classes=C, folds=folds, dims=d, meta={"synth": cfg.to_dict()})
