"""RAdam wrapped by Lookahead, the step LR schedule and the training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core.params import ParameterStore, is_bias, make_rng
from .core.tensor import Tape, reverse_accumulate
from .data.batch import Batch
from .exceptions import ConfigError, DivergenceError, NonFiniteError
from .metrics import classification_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 45
    batch_size: int = 64
    lr: float = 1e-3
    milestones: tuple[int, ...] = (15, 30, 45)
    lr_factor: float = 0.1
    patience: int = 10
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lookahead_k: int = 5
    lookahead_alpha: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "milestones", tuple(int(m) for m in self.milestones))
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ConfigError(f"milestones must be strictly increasing, got {self.milestones}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.patience < 0:
            raise ConfigError("patience must be >= 0")
        if self.lookahead_k < 1 or not 0.0 < self.lookahead_alpha <= 1.0:
            raise ConfigError("lookahead needs k >= 1 and alpha in (0, 1]")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["milestones"] = list(self.milestones)
        return out

    @classmethod
    def from_dict(cls, record: dict) -> "TrainConfig":
        unknown = set(record) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train field(s): {sorted(unknown)}")
        return cls(**record)


DESK_TRAIN = TrainConfig(batch_size=16)


def lr_at_epoch(epoch: int, config: TrainConfig) -> float:
    """Base LR times ``lr_factor`` per milestone already reached."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    passed = sum(1 for m in config.milestones if m <= epoch)
    return config.lr * config.lr_factor**passed


def rectification(t: int, beta2: float) -> tuple[float, float]:
    """``(rho_t, r_t)`` of RAdam at step ``t``; ``r_t`` is NaN when ``rho_t <= 4``."""
    rho_inf = 2.0 / (1.0 - beta2) - 1.0
    b2t = beta2**t
    rho_t = rho_inf - 2.0 * t * b2t / (1.0 - b2t)
    if rho_t <= 4.0:
        return rho_t, math.nan
    r_t = math.sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
    return rho_t, r_t


class RAdam:
    """Rectified Adam with coupled L2 decay (biases excluded)."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: ParameterStore, grads: dict[str, np.ndarray], lr: float) -> None:
        for name, g in grads.items():
            if not np.isfinite(g).all():
                raise NonFiniteError(f"non-finite gradient for {name}")
        self.t += 1
        t = self.t
        rho_t, r_t = rectification(t, self.beta2)
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, g in grads.items():
            theta = params[name]
            if self.weight_decay and not is_bias(name):
                g = g + self.weight_decay * theta
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(theta)
                self.v[name] = np.zeros_like(theta)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / bc1
            if rho_t > 4.0:
                denom = np.sqrt(v / bc2) + self.eps
                theta -= lr * r_t * m_hat / denom
            else:
                theta -= lr * m_hat


class Lookahead:
    """Every ``k`` inner steps pull slow weights toward the fast ones and reset."""

    def __init__(self, inner: RAdam, k: int = 5, alpha: float = 0.5):
        self.inner = inner
        self.k = k
        self.alpha = alpha
        self.counter = 0
        self.slow: dict[str, np.ndarray] | None = None

    def step(self, params: ParameterStore, grads: dict[str, np.ndarray], lr: float) -> None:
        if self.slow is None:
            self.slow = {name: params[name].copy() for name in params}
        self.inner.step(params, grads, lr)
        self.counter += 1
        if self.counter % self.k == 0:
            for name, slow in self.slow.items():
                # (1 - a) * s + a * f is exactly f when a == 1
                slow[...] = (1.0 - self.alpha) * slow + self.alpha * params[name]
                params[name][...] = slow


def make_optimizer(config: TrainConfig) -> Lookahead:
    inner = RAdam(config.beta1, config.beta2, config.eps, config.weight_decay)
    return Lookahead(inner, config.lookahead_k, config.lookahead_alpha)


@dataclass
class TrainResult:
    params: ParameterStore
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_map: float = -math.inf
    steps: int = 0


def _batch_gradients(network, params: ParameterStore, batch: Batch, rng) -> tuple[float, dict[str, np.ndarray]]:
    with Tape() as tape:
        leaves = params.watch(tape)
        loss = network.loss(leaves, batch, train=True, rng=rng)
    node_grads = reverse_accumulate(tape, loss)
    return loss.item(), {name: node_grads[t.node] for name, t in leaves.items()}


def eval_map(network, params: ParameterStore, batch: Batch) -> tuple[float, float]:
    """Eval-mode ``(classification mAP, cross-entropy)`` on ``batch``."""
    from .nn.network import batch_forward_probs

    probs, logits = batch_forward_probs(network, params, batch)
    scores = probs if network.spec.descriptor == "probs" else logits
    picked = probs[np.arange(len(batch)), batch.labels]
    loss = -float(np.mean(np.log(np.maximum(picked, 1e-12))))
    return classification_map(scores, batch.labels).map, loss


def train(network, params: ParameterStore, train_batch: Batch, config: TrainConfig, eval_batch: Batch | None = None) -> TrainResult:
    """Mini-batch training with early stopping on held-out classification mAP.

    Without ``eval_batch`` the training set itself is monitored.  Returns
    the best-mAP snapshot, where a tie in mAP goes to the lower monitored
    cross-entropy (mAP saturates at 1 long before the loss stops falling).
    ``params`` is updated in place as training runs.
    """
    if len(train_batch) == 0:
        raise ValueError("empty training split")
    monitor = eval_batch if eval_batch is not None and len(eval_batch) else train_batch
    shuffle_rng = make_rng(config.seed, 2)
    dropout_rng = make_rng(config.seed, 3)
    opt = make_optimizer(config)
    result = TrainResult(params=params.copy())
    best_loss = math.inf
    stale = 0
    n = len(train_batch)
    for epoch in range(config.epochs):
        lr = lr_at_epoch(epoch, config)
        order = shuffle_rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            mb = train_batch.take(order[start : start + config.batch_size])
            try:
                loss, grads = _batch_gradients(network, params, mb, dropout_rng)
            except NonFiniteError as exc:
                raise DivergenceError(f"epoch {epoch}, step {result.steps}: {exc}") from exc
            if not math.isfinite(loss):
                raise DivergenceError(f"epoch {epoch}, step {result.steps}: loss is {loss}")
            opt.step(params, grads, lr)
            losses.append(loss * len(mb))
            result.steps += 1
        score, monitor_loss = eval_map(network, params, monitor)
        record = {
            "epoch": epoch,
            "lr": lr,
            "loss": float(sum(losses) / n),
            "map": score,
            "monitor_loss": monitor_loss,
        }
        result.history.append(record)
        logger.debug("epoch %d lr %.2e loss %.5f mAP %.4f", epoch, lr, record["loss"], score)
        if score > result.best_map or (score == result.best_map and monitor_loss < best_loss):
            result.best_map = score
            best_loss = monitor_loss
            result.best_epoch = epoch
            result.params = params.copy()
            stale = 0
        else:
            stale += 1
            if stale > config.patience:
                break
    return result
