"""Minibatch SGD with cosine-annealed learning rate and C-index model selection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import BinnedBatch
from .losses import LossWeights, combined_loss
from .metrics import c_index
from .model import (
    ModelConfig, ModelParams, apply_head, backward, forward, head_backward,
    init_params, predict_risk,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    batch_size: int = 256
    lr_init: float = 0.01
    momentum: float = 0.0
    weight_decay: float = 0.0
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.lr_init <= 0:
            raise ValueError("lr_init must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.eval_every < 1:
            raise ValueError("eval_every must be at least 1")


@dataclass
class EpochRecord:
    epoch: int               # 1-based
    lr: float
    loss: float
    likelihood: float
    pairwise: float
    calibration: float
    val_c_index: float | None = None


@dataclass(eq=False)
class TrainState:
    params: ModelParams
    velocity: dict[str, np.ndarray] = field(default_factory=dict)
    epoch: int = 0
    best_c_index: float = -math.inf
    best_epoch: int = -1
    best_params: ModelParams | None = None
    records: list[EpochRecord] = field(default_factory=list)


def cosine_lr(epoch: int, total_epochs: int, lr_init: float) -> float:
    """Half-cosine schedule from lr_init at epoch 0 down to 0 at total_epochs."""
    if total_epochs < 1:
        raise ValueError("total_epochs must be positive")
    if not 0 <= epoch <= total_epochs:
        raise ValueError("epoch must lie in [0, total_epochs]")
    return lr_init * (1.0 + math.cos(math.pi * epoch / total_epochs)) / 2.0


def sgd_step(params: ModelParams, grads: dict[str, np.ndarray], lr: float,
             momentum: float = 0.0, weight_decay: float = 0.0,
             velocity: dict[str, np.ndarray] | None = None) -> ModelParams:
    """In-place heavy-ball update: v <- momentum*v + g + wd*w; w <- w - lr*v.

    Running BatchNorm statistics are untouched.  Non-finite gradients abort
    with the offending tensor named.
    """
    if velocity is None:
        velocity = {}
    for name in params.trainable_names():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in tensor '{name}'")
        if weight_decay != 0.0:
            g = g + weight_decay * params.tensors[name]
        v = velocity.get(name)
        v = g if v is None or momentum == 0.0 else momentum * v + g
        velocity[name] = v
        params.tensors[name] -= lr * v
    return params


def _dropout_seed(seed: int, epoch: int, batch_index: int) -> list[int]:
    return [seed, epoch, batch_index, 0x5F]


def train_epoch(state: TrainState, train: BinnedBatch, weights: LossWeights,
                config: TrainConfig) -> TrainState:
    """One pass over the training data in a seeded, epoch-dependent order.

    A trailing batch of size 1 is dropped (BatchNorm needs batch statistics).
    """
    n = len(train)
    order = np.random.default_rng([config.seed, state.epoch]).permutation(n)
    lr = cosine_lr(state.epoch, config.epochs, config.lr_init)
    head = state.params.config.head
    totals = np.zeros(4)
    n_batches = 0
    for batch_index, start in enumerate(range(0, n, config.batch_size)):
        idx = order[start:start + config.batch_size]
        if idx.size == 1:
            log.info("epoch %d: dropping trailing batch of size 1", state.epoch + 1)
            continue
        sub = train.take(idx)
        logits, cache = forward(
            state.params, sub.features, mode="train",
            seed=_dropout_seed(config.seed, state.epoch, batch_index),
        )
        pmfs = apply_head(head, logits)
        value, grad_pmf, parts = combined_loss(pmfs, sub, weights)
        grad_logits = head_backward(head, pmfs, grad_pmf)
        grads = backward(state.params, cache, grad_logits)
        sgd_step(state.params, grads, lr, config.momentum, config.weight_decay,
                 state.velocity)
        totals += (value, parts["likelihood"], parts["pairwise"], parts["calibration"])
        n_batches += 1
    if n_batches == 0:
        raise ValueError("training data produced no usable batches")
    means = totals / n_batches
    state.records.append(EpochRecord(
        epoch=state.epoch + 1, lr=lr, loss=float(means[0]),
        likelihood=float(means[1]), pairwise=float(means[2]),
        calibration=float(means[3]),
    ))
    state.epoch += 1
    return state


def validation_c_index(params: ModelParams, val: BinnedBatch) -> float:
    """Eval-mode risk scores against raw validation times."""
    logits, _ = forward(params, val.features, mode="eval")
    risks = predict_risk(apply_head(params.config.head, logits))
    return c_index(risks, val.times, val.events)


def _maybe_snapshot(state: TrainState, score: float) -> None:
    # strict improvement only: ties keep the earlier epoch's snapshot
    if score > state.best_c_index:
        state.best_c_index = score
        state.best_epoch = state.epoch
        state.best_params = state.params.copy()


def fit(train: BinnedBatch, val: BinnedBatch, model_config: ModelConfig,
        weights: LossWeights, config: TrainConfig):
    """Train and return (best_params, history).

    The snapshot with the highest validation C-index wins; validation is
    scored every ``eval_every`` epochs and always on the final epoch.  Both
    splits must be binned with the same grid object, which guards against
    accidentally refitting the normalization on validation data.
    """
    if train.grid is not val.grid:
        raise ValueError("train and val batches must share the training time grid")
    params = init_params(model_config, config.seed)
    state = TrainState(params=params)
    if config.epochs == 0:
        return params.copy(), []
    for _ in range(config.epochs):
        train_epoch(state, train, weights, config)
        if state.epoch % config.eval_every == 0 or state.epoch == config.epochs:
            score = validation_c_index(state.params, val)
            state.records[-1].val_c_index = score
            _maybe_snapshot(state, score)
    return state.best_params, state.records


def write_history_csv(records, path) -> None:
    """Epoch log: repr-formatted floats keep reruns byte-identical."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch,lr,loss,likelihood,pairwise,calibration,val_c_index\n")
        for r in records:
            val = "" if r.val_c_index is None else repr(r.val_c_index)
            fh.write(
                f"{r.epoch},{r.lr!r},{r.loss!r},{r.likelihood!r},"
                f"{r.pairwise!r},{r.calibration!r},{val}\n"
            )
