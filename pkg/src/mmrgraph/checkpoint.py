"""Parameter checkpoints: one MMRT file per tensor plus a JSON header."""

from __future__ import annotations

import json
from pathlib import Path

from .core.params import ParameterStore
from .data.mmrt import read_tensor, write_tensor
from .exceptions import FormatError

HEADER = "checkpoint.json"
FORMAT = "mmrgraph-checkpoint/1"


def save_checkpoint(directory, params: ParameterStore, step: int, epoch: int, config_hash: str, extra: dict | None = None) -> Path:
    """Write ``params`` under ``directory``; returns the header path.

    The header carries no timestamps, so identical training runs give
    byte-identical checkpoints.
    """
    root = Path(directory)
    (root / "tensors").mkdir(parents=True, exist_ok=True)
    entries = []
    for name in params:
        rel = f"tensors/{name}.mmrt"
        write_tensor(root / rel, params[name])
        entries.append({"name": name, "path": rel, "shape": list(params[name].shape)})
    header = {
        "format": FORMAT,
        "step": int(step),
        "epoch": int(epoch),
        "config_hash": config_hash,
        "tensors": entries,
        "extra": extra or {},
    }
    path = root / HEADER
    path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return path


def load_checkpoint(directory) -> tuple[ParameterStore, dict]:
    """Return ``(params, header)``; tensor order follows the header."""
    root = Path(directory)
    path = root / HEADER
    try:
        header = json.loads(path.read_text())
    except FileNotFoundError:
        raise FileNotFoundError(f"no checkpoint header at {path}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if header.get("format") != FORMAT:
        raise FormatError(f"{path}: unsupported checkpoint format {header.get('format')!r}")
    params = ParameterStore()
    for entry in header["tensors"]:
        value = read_tensor(root / entry["path"])
        if list(value.shape) != entry["shape"]:
            raise FormatError(f"{entry['path']}: shape {value.shape} differs from header {entry['shape']}")
        params[entry["name"]] = value
    return params, header
