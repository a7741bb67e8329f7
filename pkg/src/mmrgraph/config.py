"""Run configuration shared by every command-line subcommand.

A config is one JSON object::

    {
      "dataset": {"synth": {"num_classes": 4, "samples_per_class": 30}},
      "dims": {"profile": "desk", "overrides": {"layers": 3}},
      "network": {"affinity": "row-softmax"},
      "train": {"epochs": 45, "batch_size": 16},
      "variant": {"use_mmr": true},
      "grid": "component",
      "out": "runs/desk",
      "seed": 0,
      "fold": 0,
      "subset": "all",
      "gradcheck": {"step": 1e-6, "tol": 1e-6, "samples": 2}
    }

``dataset`` takes exactly one of ``manifest`` (a path) or ``synth``.  Relative
paths resolve against the config file's directory.  The top-level ``seed``
drives data generation, initialisation, shuffling and dropout; nested
``seed`` keys are rejected so there is only one place to set it.
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .data.synth import SynthConfig
from .dims import PROFILES, Dims, resolve_dims
from .exceptions import ConfigError
from .metrics import SUBSETS
from .nn.graph import AFFINITY_MODES
from .nn.network import VariantSpec
from .optim import TrainConfig

TOP_LEVEL = {"dataset", "dims", "network", "train", "variant", "grid", "out", "seed", "fold", "subset", "gradcheck"}
NETWORK_FIELDS = {"affinity", "shared_affinity", "gcn_activation", "dropout"}
GRADCHECK_FIELDS = {"step", "tol", "samples"}
GRID_PRESETS = ("component", "modality", "projection", "ordering")
U64_MAX = 2**64 - 1


class ConfigFieldError(ConfigError):
    """A config problem tied to one field (and, when known, one line)."""

    def __init__(self, field_path: str, message: str, line: int | None = None, source: str | None = None):
        self.field_path = field_path
        self.line = line
        where = f"{source}:" if source else ""
        where += f"{line}: " if line is not None else (" " if source else "")
        super().__init__(f"{where}{field_path}: {message}")


@dataclass
class RunConfig:
    manifest: Path | None = None
    synth: SynthConfig | None = None
    dims: Dims = field(default_factory=lambda: resolve_dims("desk"))
    network: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    variant: VariantSpec = field(default_factory=VariantSpec)
    grid: str | list[VariantSpec] | None = None
    out: Path = Path("runs")
    seed: int = 0
    fold: int = 0
    subset: str = "all"
    gradcheck: dict = field(default_factory=lambda: {"step": 1e-6, "tol": 1e-6, "samples": 2})
    raw: dict = field(default_factory=dict, repr=False)

    def with_cli(self, seed=None, fold=None, subset=None, out=None) -> "RunConfig":
        """Apply command-line overrides; the seed reaches every consumer."""
        changes = {}
        if seed is not None:
            _check_seed(seed, "--seed")
            changes["seed"] = seed
            changes["train"] = dataclasses.replace(self.train, seed=seed)
            if self.synth is not None:
                changes["synth"] = dataclasses.replace(self.synth, seed=seed)
        if fold is not None:
            changes["fold"] = fold
        if subset is not None:
            changes["subset"] = subset
        if out is not None:
            changes["out"] = Path(out)
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        """The resolved configuration; hashed into reports and checkpoints."""
        grid = self.grid
        if isinstance(grid, list):
            grid = [v.to_dict() for v in grid]
        return {
            "dataset": {"manifest": str(self.manifest)} if self.manifest else {"synth": self.synth.to_dict()},
            "dims": self.dims.to_dict(),
            "network": dict(self.network),
            "train": self.train.to_dict(),
            "variant": self.variant.to_dict(),
            "grid": grid,
            "seed": self.seed,
            "fold": self.fold,
            "subset": self.subset,
            "gradcheck": dict(self.gradcheck),
        }


def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    match = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, match.start()) + 1 if match else None


def _check_seed(seed, where: str) -> None:
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= U64_MAX:
        raise ConfigError(f"{where}: seed must be an integer in [0, 2^64 - 1], got {seed!r}")


class _Parser:
    def __init__(self, text: str | None, source: str | None, base: Path):
        self.text = text
        self.source = source
        self.base = base

    def fail(self, path: str, message: str):
        key = path.split(".")[-1]
        raise ConfigFieldError(path, message, _line_of(self.text, key), self.source)

    def obj(self, value, path: str, allowed: set[str]) -> dict:
        if not isinstance(value, dict):
            self.fail(path, f"expected an object, got {type(value).__name__}")
        for key in value:
            if key not in allowed:
                self.fail(f"{path}.{key}" if path else key, f"unknown field; expected one of {sorted(allowed)}")
        return value

    def path(self, value, path: str) -> Path:
        if not isinstance(value, str) or not value:
            self.fail(path, "expected a non-empty path string")
        p = Path(value)
        return p if p.is_absolute() else self.base / p

    def build(self, cls, record: dict, path: str):
        fields = {f.name for f in dataclasses.fields(cls)}
        for key in record:
            if key not in fields:
                self.fail(f"{path}.{key}", f"unknown field; expected one of {sorted(fields)}")
        try:
            return cls(**record)
        except (ConfigError, TypeError, ValueError) as exc:
            self.fail(path, str(exc))

    def parse(self, data) -> RunConfig:
        data = self.obj(data, "", TOP_LEVEL)
        seed = data.get("seed", 0)
        try:
            _check_seed(seed, "seed")
        except ConfigError as exc:
            self.fail("seed", str(exc).split(": ", 1)[1])

        dims = self.dims(data.get("dims", "desk"))

        if "dataset" not in data:
            self.fail("dataset", "missing; give exactly one dataset source (manifest or synth)")
        source = self.obj(data["dataset"], "dataset", {"manifest", "synth"})
        if len(source) != 1:
            self.fail("dataset", f"exactly one dataset source (manifest or synth) is required, got {sorted(source) or 'none'}")
        manifest = synth = None
        if "manifest" in source:
            manifest = self.path(source["manifest"], "dataset.manifest")
        else:
            record = dict(self.obj(source["synth"], "dataset.synth", {f.name for f in dataclasses.fields(SynthConfig)}))
            for banned in ("seed", "dims"):
                if banned in record:
                    hint = "top-level seed" if banned == "seed" else "top-level dims"
                    self.fail(f"dataset.synth.{banned}", f"set through the {hint}")
            synth = self.build(SynthConfig, {**record, "seed": seed, "dims": dims}, "dataset.synth")

        network = dict(self.obj(data.get("network", {}), "network", NETWORK_FIELDS))
        if "affinity" in network and network["affinity"] not in AFFINITY_MODES:
            self.fail("network.affinity", f"expected one of {list(AFFINITY_MODES)}, got {network['affinity']!r}")

        train_record = dict(self.obj(data.get("train", {}), "train", set(TrainConfig.__dataclass_fields__)))
        if "seed" in train_record:
            self.fail("train.seed", "set through the top-level seed")
        train = self.build(TrainConfig, {**train_record, "seed": seed}, "train")

        variant = self.build(VariantSpec, self.obj(data.get("variant", {}), "variant", set(VariantSpec.__dataclass_fields__)), "variant")

        grid = data.get("grid")
        if isinstance(grid, str) and grid not in GRID_PRESETS:
            grid = str(self.path(grid, "grid"))
        elif isinstance(grid, list):
            grid = [self.build(VariantSpec, self.obj(r, f"grid[{i}]", set(VariantSpec.__dataclass_fields__)), f"grid[{i}]") for i, r in enumerate(grid)]
        elif grid is not None and not isinstance(grid, str):
            self.fail("grid", "expected a preset name, a path or a list of variants")

        fold = data.get("fold", 0)
        if fold not in (0, 1, 2) or isinstance(fold, bool):
            self.fail("fold", f"expected 0, 1 or 2, got {fold!r}")
        subset = data.get("subset", "all")
        if subset not in SUBSETS:
            self.fail("subset", f"expected one of {list(SUBSETS)}, got {subset!r}")
        gradcheck = {"step": 1e-6, "tol": 1e-6, "samples": 2}
        gradcheck.update(self.obj(data.get("gradcheck", {}), "gradcheck", GRADCHECK_FIELDS))
        if not (isinstance(gradcheck["samples"], int) and gradcheck["samples"] >= 1):
            self.fail("gradcheck.samples", "expected a positive integer")

        return RunConfig(
            manifest=manifest,
            synth=synth,
            dims=dims,
            network=network,
            train=train,
            variant=variant,
            grid=grid,
            out=self.path(data.get("out", "runs"), "out"),
            seed=seed,
            fold=fold,
            subset=subset,
            gradcheck=gradcheck,
            raw=data,
        )

    def dims(self, value) -> Dims:
        if isinstance(value, str):
            value = {"profile": value}
        value = self.obj(value, "dims", {"profile", "overrides"})
        profile = value.get("profile", "desk")
        if profile not in PROFILES:
            self.fail("dims.profile", f"expected one of {sorted(PROFILES)}, got {profile!r}")
        overrides = self.obj(value.get("overrides", {}), "dims.overrides", {f.name for f in dataclasses.fields(Dims)})
        try:
            return resolve_dims(profile, **overrides)
        except (ConfigError, TypeError) as exc:
            self.fail("dims.overrides", str(exc))


def parse_config(data, source: str | None = None, text: str | None = None, base: Path | None = None) -> RunConfig:
    """Validate an already-decoded config mapping."""
    return _Parser(text, source, base or Path.cwd()).parse(data)


def load_config(path) -> RunConfig:
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    return parse_config(data, source=str(path), text=text, base=path.parent)
