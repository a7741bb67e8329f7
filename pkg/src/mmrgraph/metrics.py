"""Average precision, classification mAP and query-by-example retrieval mAP."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import EmptySubsetError

SUBSETS = ("all", "with-text", "without-text")


def rank_order(scores) -> np.ndarray:
    """Indices by descending score; ties keep ascending original index."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def average_precision(scores, relevance) -> float:
    """Un-interpolated AP: mean of precision@r over the ranks r of relevant items."""
    rel = np.asarray(relevance, dtype=bool)
    total = int(rel.sum())
    if total == 0:
        raise ValueError("average precision needs at least one relevant item")
    ranked = rel[rank_order(scores)]
    hits = np.cumsum(ranked)
    ranks = np.flatnonzero(ranked) + 1
    return math.fsum((hits[ranks - 1] / ranks).tolist()) / total


@dataclass
class EvaluationReport:
    protocol: str
    subset: str
    ap: list[float]
    keys: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)

    @property
    def map(self) -> float:
        return math.fsum(self.ap) / len(self.ap) if self.ap else math.nan

    def to_dict(self) -> dict:
        out = {
            "protocol": self.protocol,
            "subset": self.subset,
            "ap": list(self.ap),
            "keys": list(self.keys),
            "counts": dict(self.counts),
        }
        if self.ap:
            out["map"] = self.map
        return out


def classification_map(scores, labels, subset: str = "all") -> EvaluationReport:
    """Per-class AP over the rows of an ``N x C`` score matrix.

    Classes without a positive among the rows are left out of the mean.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or len(scores) != len(labels):
        raise ValueError(f"scores {scores.shape} do not match {len(labels)} labels")
    ap, keys = [], []
    for c in range(scores.shape[1]):
        rel = labels == c
        if rel.any():
            ap.append(average_precision(scores[:, c], rel))
            keys.append(c)
    return EvaluationReport(
        "classification",
        subset,
        ap,
        keys,
        counts={"samples": int(len(labels)), "classes_scored": len(ap), "classes": int(scores.shape[1])},
    )


def cosine_similarity_matrix(descriptors) -> np.ndarray:
    x = np.asarray(descriptors, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    unit = x / np.where(norms > 0, norms, 1.0)[:, None]
    return unit @ unit.T


def retrieval_map(descriptors, labels, ids=None) -> EvaluationReport:
    """Leave-one-out query-by-example mAP under cosine similarity."""
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    if n < 2:
        raise ValueError("retrieval needs at least two items")
    ids = list(ids) if ids is not None else list(range(n))
    sims = cosine_similarity_matrix(descriptors)
    ap, keys, skipped = [], [], []
    for q in range(n):
        others = np.delete(np.arange(n), q)
        rel = labels[others] == labels[q]
        if not rel.any():
            skipped.append(ids[q])
            continue
        ap.append(average_precision(sims[q, others], rel))
        keys.append(ids[q])
    return EvaluationReport(
        "retrieval",
        "all",
        ap,
        keys,
        counts={"queries": len(ap), "database": n, "skipped": len(skipped), "skipped_ids": skipped},
    )


def subset_mask(has_text, subset: str) -> np.ndarray:
    has_text = np.asarray(has_text, dtype=bool)
    if subset == "all":
        return np.ones_like(has_text)
    if subset == "with-text":
        return has_text
    if subset == "without-text":
        return ~has_text
    raise ValueError(f"subset must be one of {SUBSETS}, got {subset!r}")


def evaluate_classification(model, bundles, subset: str = "all") -> EvaluationReport:
    """Classification mAP of ``model`` (anything with ``transform``) on a bundle subset."""
    mask = subset_mask([b.has_text for b in bundles], subset)
    chosen = [b for b, keep in zip(bundles, mask) if keep]
    if not chosen:
        raise EmptySubsetError(f"no test bundles in subset {subset!r}")
    scores = model.transform(chosen)
    return classification_map(scores, [b.label for b in chosen], subset)


def evaluate_retrieval(model, bundles) -> EvaluationReport:
    if len(bundles) < 2:
        raise ValueError("retrieval needs at least two bundles")
    desc = model.transform(bundles)
    return retrieval_map(desc, [b.label for b in bundles], [b.id for b in bundles])
