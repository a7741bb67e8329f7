"""JSON reports with a stable layout, so reruns diff cleanly."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


def to_jsonable(obj):
    """Convert dataclasses, numpy values and tuples to plain JSON types.

    Non-finite floats become ``None`` so the output stays strict JSON.
    """
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return to_jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"))


def config_hash(config) -> str:
    """SHA-256 of the canonical JSON form of ``config``."""
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def _flag_empty(node) -> list[str]:
    """Mark every report dict that has an ``ap`` list but nothing in it."""
    warnings = []
    if isinstance(node, dict):
        if "ap" in node and not node["ap"]:
            node.pop("map", None)
            node["warning"] = "empty AP list; mAP omitted"
            warnings.append(node["warning"])
        for value in node.values():
            warnings += _flag_empty(value)
    elif isinstance(node, list):
        for value in node:
            warnings += _flag_empty(value)
    return warnings


def build_report(results, config=None, seed: int | None = None, now: datetime | None = None, timings: dict | None = None) -> dict:
    body = to_jsonable(results)
    warnings = _flag_empty(body)
    stamps = {"written": (now or datetime.now(timezone.utc)).isoformat()}
    if timings:
        stamps["seconds"] = to_jsonable(timings)
    return {
        "schema_version": SCHEMA_VERSION,
        "config_hash": config_hash(config) if config is not None else None,
        "seed": seed,
        "timestamps": stamps,
        "warnings": warnings,
        "results": body,
    }


def emit_report(
    results,
    path,
    config=None,
    seed: int | None = None,
    now: datetime | None = None,
    timings: dict | None = None,
) -> Path:
    """Write ``results`` as indented JSON under a small envelope.

    Wall-clock figures go in ``timings`` and land under ``timestamps``,
    the only block that varies between two calls with the same arguments.
    """
    path = Path(path)
    report = build_report(results, config, seed, now, timings)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return path
