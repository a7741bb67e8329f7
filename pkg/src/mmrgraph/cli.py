"""``mmrgraph`` command-line entry point.

Exit status is 0 on success, 1 when the command line, config or input files
are invalid, and 2 when a valid run fails (divergence, failed gradient check,
unwritable output).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import ablation
from .checkpoint import load_checkpoint, save_checkpoint
from .checks import model_gradcheck
from .config import RunConfig, load_config
from .core.params import INIT_STREAM, make_rng
from .data.batch import stack_bundles
from .data.bundle import Dataset, fold_split, validate_bundle
from .data.manifest import read_dataset, write_dataset
from .data.synth import synth_generate
from .estimator import MMRClassifier
from .exceptions import ConfigError, FormatError, MMRError
from .metrics import SUBSETS, evaluate_classification, evaluate_retrieval, subset_mask
from .reporting import config_hash, emit_report

logger = logging.getLogger("mmrgraph")

COMMANDS = ("gen", "train", "eval", "retrieve", "ablate", "gradcheck")
GRID_PRESETS = {
    "component": ablation.COMPONENT_VARIANTS,
    "modality": ablation.MODALITY_VARIANTS,
    "projection": ablation.PROJECTION_VARIANTS,
    "ordering": ablation.ORDERING_VARIANTS,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mmrgraph", description="Scene-text aware fine-grained classification and retrieval.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", help="output directory (overrides the config)")
    parser.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides the config)")
    parser.add_argument("--fold", type=int, choices=(0, 1, 2), help="held-out fold")
    parser.add_argument("--subset", choices=SUBSETS, help="evaluation subset")
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="sequential reference mode (every command already runs sequentially)",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


class ValidationFailure(Exception):
    """Raised while preparing a run; maps to exit status 1."""


def _load_dataset(config: RunConfig) -> Dataset:
    if config.synth is not None:
        return synth_generate(config.synth)
    dataset = read_dataset(config.manifest)
    for bundle in dataset.bundles:
        validate_bundle(bundle, config.dims)
    return dataset


def _network_options(config: RunConfig) -> dict:
    return dict(config.network)


def _classifier(config: RunConfig, num_classes: int) -> MMRClassifier:
    return MMRClassifier(
        dims=config.dims,
        n_classes=num_classes,
        variant=config.variant,
        train_config=config.train,
        random_state=config.seed,
        **_network_options(config),
    )


def _checkpoint_dir(config: RunConfig) -> Path:
    return config.out / "checkpoint"


def _report(config: RunConfig, name: str, results, deterministic: bool, timings=None) -> Path:
    body = {"command": name, "deterministic": deterministic, "fold": config.fold, **results}
    path = emit_report(body, config.out / f"{name}.json", config=config.to_dict(), seed=config.seed, timings=timings)
    logger.info("wrote %s", path)
    return path


def cmd_gen(config: RunConfig, dataset: Dataset, args) -> None:
    if config.synth is None:
        raise ValidationFailure("gen needs a synth dataset source")
    path = write_dataset(dataset, config.out / "dataset")
    _report(config, "gen", {"manifest": str(path), "samples": len(dataset), "synth": config.synth.to_dict()}, args.deterministic)


def cmd_train(config: RunConfig, dataset: Dataset, args) -> None:
    train_ids, test_ids = fold_split(dataset, config.fold)
    model = _classifier(config, dataset.num_classes)
    model.fit(dataset.subset(train_ids), eval_set=dataset.subset(test_ids))
    save_checkpoint(
        _checkpoint_dir(config),
        model.params_,
        step=model.n_steps_,
        epoch=model.best_epoch_,
        config_hash=config_hash(config.to_dict()),
        extra={"num_classes": model.n_classes_, "best_map": model.best_map_},
    )
    _report(
        config,
        "train",
        {"best_epoch": model.best_epoch_, "best_map": model.best_map_, "history": model.history_},
        args.deterministic,
    )


def _restore(config: RunConfig, dataset: Dataset) -> MMRClassifier:
    directory = _checkpoint_dir(config)
    try:
        params, header = load_checkpoint(directory)
    except FileNotFoundError as exc:
        raise ValidationFailure(f"{exc}; run `train` with this config first") from None
    if header["config_hash"] != config_hash(config.to_dict()):
        logger.warning("checkpoint was written under a different config")
    model = _classifier(config, dataset.num_classes)
    try:
        return model.set_fitted(params, dataset.num_classes)
    except ValueError as exc:
        raise ValidationFailure(f"{directory}: {exc}") from None


def _test_bundles(config: RunConfig, dataset: Dataset):
    _, test_ids = fold_split(dataset, config.fold)
    return dataset.subset(test_ids)


def cmd_eval(config: RunConfig, dataset: Dataset, args) -> None:
    model = _restore(config, dataset)
    report = evaluate_classification(model, _test_bundles(config, dataset), config.subset)
    _report(config, f"eval-{config.subset}", {"evaluation": report}, args.deterministic)


def cmd_retrieve(config: RunConfig, dataset: Dataset, args) -> None:
    model = _restore(config, dataset)
    bundles = _test_bundles(config, dataset)
    mask = subset_mask([b.has_text for b in bundles], config.subset)
    chosen = [b for b, keep in zip(bundles, mask) if keep]
    report = evaluate_retrieval(model, chosen)
    report.subset = config.subset
    _report(config, f"retrieve-{config.subset}", {"evaluation": report}, args.deterministic)


def _grid_variants(config: RunConfig):
    grid = config.grid
    if grid is None:
        return list(ablation.ORDERING_VARIANTS)
    if isinstance(grid, list):
        return grid
    if grid in GRID_PRESETS:
        return list(GRID_PRESETS[grid])
    try:
        return ablation.load_grid(grid)
    except FileNotFoundError:
        raise ValidationFailure(f"grid file {grid} not found") from None


def cmd_ablate(config: RunConfig, dataset: Dataset, args) -> None:
    variants = _grid_variants(config)
    result = ablation.run_grid(variants, dataset, config.train, init_seed=config.seed, **_network_options(config))
    _report(config, "ablate", {"grid": result.to_list(runtime=False)}, args.deterministic, result.runtimes())


def cmd_gradcheck(config: RunConfig, dataset: Dataset, args) -> int:
    network = _classifier(config, dataset.num_classes).build_network(dataset.num_classes)
    batch = stack_bundles(dataset.bundles[: config.gradcheck["samples"]], config.dims)
    params = network.init_params(make_rng(config.seed, INIT_STREAM))
    report, seconds = model_gradcheck(
        network, params, batch, seed=config.seed, step=config.gradcheck["step"], tol=config.gradcheck["tol"]
    )
    _report(config, "gradcheck", {"gradcheck": report}, args.deterministic, {"gradcheck": seconds})
    logger.info("max relative error %.3e over %d scalars (%.1fs)", report.max_error, report.n_scalars, seconds)
    return 0 if report.passed else 2


HANDLERS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "retrieve": cmd_retrieve,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"mmrgraph: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    try:
        config = load_config(args.config).with_cli(args.seed, args.fold, args.subset, args.out)
        dataset = _load_dataset(config)
    except (ConfigError, FormatError, ValidationFailure, OSError, ValueError) as exc:
        print(f"mmrgraph: {exc}", file=sys.stderr)
        return 1

    try:
        status = HANDLERS[args.command](config, dataset, args)
    except ValidationFailure as exc:
        print(f"mmrgraph: {exc}", file=sys.stderr)
        return 1
    except (MMRError, OSError, ValueError, FloatingPointError) as exc:
        print(f"mmrgraph: {args.command} failed: {exc}", file=sys.stderr)
        return 2
    return status or 0


if __name__ == "__main__":
    sys.exit(main())
