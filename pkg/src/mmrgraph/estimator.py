"""scikit-learn compatible front-end to the multi-modal reasoning network."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core.params import INIT_STREAM, ParameterStore, make_rng
from .data.batch import Batch, stack_bundles
from .data.bundle import Dataset, FeatureBundle
from .dims import Dims, resolve_dims
from .nn.network import FULL, MMRNetwork, VariantSpec, batch_forward_probs
from .optim import DESK_TRAIN, TrainConfig, TrainResult, train


def check_bundles(X, dims: Dims) -> Batch:
    """Validate and pad ``X`` into a :class:`Batch`.

    ``X`` may be a :class:`Dataset`, a sequence of :class:`FeatureBundle`
    or an already stacked :class:`Batch`.
    """
    if isinstance(X, Batch):
        batch = X
    else:
        if isinstance(X, Dataset):
            X = X.bundles
        if not isinstance(X, Sequence) or not all(isinstance(b, FeatureBundle) for b in X):
            raise TypeError("X must be a Dataset, a Batch or a sequence of FeatureBundle")
        batch = stack_bundles(list(X), dims)
    if len(batch) == 0:
        raise ValueError("X contains no samples")
    for name in ("global_maps", "regions", "texts"):
        arr = getattr(batch, name)
        check_array(arr.reshape(len(batch), -1), ensure_all_finite=True, input_name=name)
    return batch


def _resolve(dims) -> Dims:
    if dims is None:
        return resolve_dims("desk")
    if isinstance(dims, str):
        return resolve_dims(dims)
    return dims


class MMRClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Scene-text aware fine-grained classifier over precomputed feature bundles.

    Parameters
    ----------
    dims : Dims or {"desk", "paper"}, default="desk"
    variant : VariantSpec, default=None
        Branch selection; None means the full model.
    n_classes : int, default=None
        Inferred from the labels (or the Dataset) when None.
    affinity : {"raw", "row-softmax"}, default="raw"
    shared_affinity : bool, default=False
        Build the affinity matrix once and reuse it in every graph layer.
    gcn_activation : {"all-but-last", "all", "none"}, default="all-but-last"
    dropout : float, default=0.3
    train_config : TrainConfig, default=None
        None uses the desk configuration (batch size 16, default schedule).
    random_state : int, default=0
        Seeds initialisation; shuffling and dropout use ``train_config.seed``.

    ``transform`` returns the retrieval descriptor (probabilities or logits,
    per ``variant.descriptor``).
    """

    def __init__(
        self,
        dims="desk",
        variant: VariantSpec | None = None,
        n_classes: int | None = None,
        affinity: str = "raw",
        shared_affinity: bool = False,
        gcn_activation: str = "all-but-last",
        dropout: float = 0.3,
        train_config: TrainConfig | None = None,
        random_state: int = 0,
    ):
        self.dims = dims
        self.variant = variant
        self.n_classes = n_classes
        self.affinity = affinity
        self.shared_affinity = shared_affinity
        self.gcn_activation = gcn_activation
        self.dropout = dropout
        self.train_config = train_config
        self.random_state = random_state

    def build_network(self, num_classes: int) -> MMRNetwork:
        """The untrained network these hyperparameters describe."""
        return MMRNetwork(
            self.variant or FULL,
            _resolve(self.dims),
            num_classes,
            affinity=self.affinity,
            shared_affinity=self.shared_affinity,
            gcn_activation=self.gcn_activation,
            dropout=self.dropout,
        )

    def _labels(self, X, y, batch: Batch) -> np.ndarray:
        labels = batch.labels if y is None else np.asarray(y, dtype=np.int64)
        if labels.shape != (len(batch),):
            raise ValueError(f"y has shape {labels.shape}, expected ({len(batch)},)")
        if labels.min() < 0:
            raise ValueError("labels must be non-negative class indices")
        return labels

    def fit(self, X, y=None, eval_set=None):
        """Train on ``X``; ``eval_set`` (bundles or Batch) drives early stopping."""
        dims = _resolve(self.dims)
        batch = check_bundles(X, dims)
        labels = self._labels(X, y, batch)
        if self.n_classes is not None:
            num_classes = self.n_classes
        elif isinstance(X, Dataset):
            num_classes = X.num_classes
        else:
            num_classes = int(labels.max()) + 1
        if labels.max() >= num_classes:
            raise ValueError(f"label {labels.max()} >= n_classes {num_classes}")
        batch = replace(batch, labels=labels)
        held_out = check_bundles(eval_set, dims) if eval_set is not None else None

        self.network_ = self.build_network(num_classes)
        self.classes_ = np.arange(num_classes)
        self.n_classes_ = num_classes
        self.dims_ = dims
        init = self.network_.init_params(make_rng(self.random_state, INIT_STREAM))
        config = self.train_config or DESK_TRAIN
        result: TrainResult = train(self.network_, init, batch, config, held_out)
        self.params_ = result.params
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.best_map_ = result.best_map
        self.n_steps_ = result.steps
        return self

    def set_fitted(self, params: ParameterStore, num_classes: int) -> "MMRClassifier":
        """Install trained parameters (e.g. from a checkpoint) without fitting."""
        self.network_ = self.build_network(num_classes)
        expected = self.network_.layout()
        if list(params) != list(expected) or any(params[k].shape != expected[k][0] for k in expected):
            raise ValueError("parameter store does not match the network layout")
        self.classes_ = np.arange(num_classes)
        self.n_classes_ = num_classes
        self.dims_ = _resolve(self.dims)
        self.params_ = params
        self.history_ = []
        self.best_epoch_ = -1
        self.best_map_ = float("nan")
        self.n_steps_ = 0
        return self

    def _forward(self, X) -> tuple[np.ndarray, np.ndarray]:
        check_is_fitted(self, "params_")
        return batch_forward_probs(self.network_, self.params_, check_bundles(X, self.dims_))

    def predict_proba(self, X) -> np.ndarray:
        return self._forward(X)[0]

    def decision_function(self, X) -> np.ndarray:
        return self._forward(X)[1]

    def predict(self, X) -> np.ndarray:
        probs = self.predict_proba(X)
        return self.classes_[np.argmax(probs, axis=1)]

    def transform(self, X) -> np.ndarray:
        probs, logits = self._forward(X)
        return probs if self.network_.spec.descriptor == "probs" else logits

    def score(self, X, y=None, sample_weight=None):
        if y is None:
            y = check_bundles(X, _resolve(self.dims)).labels
        return super().score(X, y, sample_weight=sample_weight)
