"""NDJSON dataset manifests backed by MMRT tensor files.

The first line is a header ``{"kind": "header", "num_classes": C, "dims": {...}}``;
every following line is one bundle record::

    {"id": "...", "label": 0, "fold": 1, "has_text": true,
     "image_w": null, "image_h": null,
     "global_map": "tensors/x.global.mmrt",
     "region_features": "...", "region_bboxes": "...", "region_scores": null,
     "text_embeddings": "...", "text_bboxes": "...", "text_confidences": "..."}

Text paths are ``null`` when the image has no text.  Paths are relative to
the manifest's directory.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..dims import Dims
from ..exceptions import DimensionMismatchError, FormatError
from .bundle import Dataset, FeatureBundle, validate_bundle
from .mmrt import read_tensor, write_tensor

TENSOR_FIELDS = ("global_map", "region_features", "region_bboxes")
TEXT_FIELDS = ("text_embeddings", "text_bboxes", "text_confidences")
REQUIRED = ("id", "label", "fold", "has_text", *TENSOR_FIELDS, *TEXT_FIELDS)


def _parse_line(line: str, lineno: int, path: Path) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{lineno}: malformed JSON ({exc.msg} at column {exc.colno})") from None
    if not isinstance(record, dict):
        raise FormatError(f"{path}:{lineno}: expected a JSON object")
    return record


def _load(root: Path, rel: str, bundle_id: str) -> np.ndarray:
    target = root / rel
    if not target.is_file():
        raise FileNotFoundError(f"{bundle_id}: missing tensor file {target}")
    return read_tensor(target)


def read_dataset(manifest_path) -> Dataset:
    path = Path(manifest_path)
    root = path.parent
    lines = path.read_text(encoding="utf-8").splitlines()
    header = None
    bundles: list[FeatureBundle] = []
    folds: dict[str, int] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        record = _parse_line(line, lineno, path)
        if header is None:
            if record.get("kind") != "header":
                raise FormatError(f"{path}:{lineno}: first record must be the header")
            try:
                header = record
                dims = Dims(**record["dims"])
                num_classes = int(record["num_classes"])
            except (KeyError, TypeError) as exc:
                raise FormatError(f"{path}:{lineno}: bad header ({exc})") from None
            continue
        missing = [k for k in REQUIRED if k not in record]
        if missing:
            raise FormatError(f"{path}:{lineno}: record lacks field(s) {missing}")
        bid = str(record["id"])
        label = int(record["label"])
        if not 0 <= label < num_classes:
            raise FormatError(f"{path}:{lineno}: {bid}: label {label} >= num_classes {num_classes}")
        arrays = {k: _load(root, record[k], bid) for k in TENSOR_FIELDS}
        if record["has_text"]:
            arrays.update({k: _load(root, record[k], bid) for k in TEXT_FIELDS})
        else:
            arrays.update(
                text_embeddings=np.zeros((0, dims.d_t)),
                text_bboxes=np.zeros((0, 4)),
                text_confidences=np.zeros(0),
            )
        scores = record.get("region_scores")
        bundle = FeatureBundle(
            id=bid,
            label=label,
            region_scores=_load(root, scores, bid) if scores else None,
            image_w=record.get("image_w"),
            image_h=record.get("image_h"),
            **arrays,
        )
        if bundle.has_text != bool(record["has_text"]):
            raise FormatError(f"{path}:{lineno}: {bid}: has_text disagrees with the text tensors")
        try:
            validate_bundle(bundle, dims)
        except DimensionMismatchError as exc:
            raise DimensionMismatchError(f"{path}:{lineno}: {exc}") from None
        bundles.append(bundle)
        folds[bid] = int(record["fold"])
    if header is None:
        raise FormatError(f"{path}: empty manifest")
    return Dataset(bundles=bundles, num_classes=num_classes, folds=folds, dims=dims, meta=header.get("meta", {}))


def write_dataset(dataset: Dataset, directory, name: str = "manifest.jsonl") -> Path:
    """Write ``dataset`` as MMRT tensors plus an NDJSON manifest; return the manifest path."""
    root = Path(directory)
    (root / "tensors").mkdir(parents=True, exist_ok=True)
    header = {
        "kind": "header",
        "num_classes": dataset.num_classes,
        "dims": dataset.dims.to_dict(),
        "meta": dataset.meta,
    }
    lines = [json.dumps(header, sort_keys=True)]
    for b in dataset.bundles:
        record = {
            "id": b.id,
            "label": int(b.label),
            "fold": int(dataset.folds[b.id]),
            "has_text": b.has_text,
            "image_w": b.image_w,
            "image_h": b.image_h,
            "region_scores": None,
        }
        fields = list(TENSOR_FIELDS) + (list(TEXT_FIELDS) if b.has_text else [])
        for f in fields:
            rel = f"tensors/{b.id}.{f}.mmrt"
            write_tensor(root / rel, getattr(b, f))
            record[f] = rel
        if not b.has_text:
            record.update({f: None for f in TEXT_FIELDS})
        if b.region_scores is not None:
            rel = f"tensors/{b.id}.region_scores.mmrt"
            write_tensor(root / rel, b.region_scores)
            record["region_scores"] = rel
        lines.append(json.dumps(record, sort_keys=True))
    out = root / name
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out
