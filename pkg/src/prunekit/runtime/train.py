"""SGD training loop with momentum, weight decay, a step learning-rate
schedule and best-validation checkpointing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from prunekit.errors import EmptySplitError, NonFiniteError, ValidationError
from prunekit.ir import ModelGraph
from prunekit.runtime.augment import AugmentConfig, augment
from prunekit.runtime.engine import LEARNABLE_SUFFIXES, evaluate, loss_and_gradients
from prunekit.runtime.weights import WeightStore


@dataclass
class LrSchedule:
    initial: float
    decay_epochs: list[int] = field(default_factory=lambda: [15, 25])
    gamma: float = 0.1

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.decay_epochs, self.decay_epochs[1:])):
            raise ValidationError("decay_epochs must be strictly increasing")
        if not 0 < self.gamma < 1:
            raise ValidationError("gamma must be in (0, 1)")

    def lr_at(self, epoch: int) -> float:
        """Learning rate during a 1-indexed epoch; decays apply at the start
        of each listed epoch."""
        applied = sum(1 for d in self.decay_epochs if d <= epoch)
        return self.initial * self.gamma ** applied


@dataclass
class LrPolicy:
    """Learning rates the original training ended with, reused by the
    data-aware pipeline: finetuning runs at the final rate, retraining
    restarts from the second-highest rate with the same gamma."""

    final_lr: float
    second_lr: float
    gamma: float

    @classmethod
    def from_schedule(cls, schedule: LrSchedule, epochs: int) -> "LrPolicy":
        applied = sum(1 for d in schedule.decay_epochs if d <= epochs)
        final = schedule.initial * schedule.gamma ** applied
        second = final / schedule.gamma if applied else schedule.initial
        return cls(final_lr=final, second_lr=second, gamma=schedule.gamma)


@dataclass
class TrainConfig:
    epochs: int
    lr_schedule: LrSchedule = field(default_factory=lambda: LrSchedule(initial=0.1))
    batch_size: int = 128
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if not 0 < self.val_fraction < 1:
            raise ValidationError("val_fraction must be in (0, 1)")


def split_train_val(
    x: np.ndarray, y: np.ndarray, val_fraction: float, seed: int
) -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Seeded shuffle, then an (1 - f):f split; performed once before any epoch."""
    if len(x) < 2:
        raise EmptySplitError("need at least 2 samples to split")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(23,)))
    order = rng.permutation(len(x))
    n_val = max(1, int(round(len(x) * val_fraction)))
    val_idx, train_idx = order[:n_val], order[n_val:]
    return (x[train_idx], y[train_idx]), (x[val_idx], y[val_idx])


def train(
    graph: ModelGraph,
    weights: WeightStore,
    dataset: tuple[np.ndarray, np.ndarray] | None,
    config: TrainConfig,
    split: tuple | None = None,
) -> tuple[WeightStore, list[dict]]:
    """Returns the checkpoint with the best validation accuracy (ties go to
    the earlier epoch) and a per-epoch history.

    The dataset is split 80:20 (per config) by a seeded shuffle before the
    first epoch; orchestration code that must share one validation split
    across several calls may pass the pre-made ((x,y),(x,y)) split instead.
    """
    history: list[dict] = []
    if config.epochs == 0:
        return weights.copy(), history

    if split is None:
        (x_train, y_train), val_split = split_train_val(*dataset, config.val_fraction, config.seed)
    else:
        (x_train, y_train), val_split = split
    current = weights.copy()
    momentum_buf: dict[str, np.ndarray] = {}
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(29,)))
    best_acc = -1.0
    best = current.copy()

    for epoch in range(1, config.epochs + 1):
        lr = config.lr_schedule.lr_at(epoch)
        order = rng.permutation(len(x_train))
        losses = []
        for step, start in enumerate(range(0, len(order), config.batch_size)):
            idx = order[start:start + config.batch_size]
            xb = x_train[idx]
            if config.augment.enabled:
                xb = augment(xb, config.augment, rng)
            try:
                loss, grads = loss_and_gradients(graph, current, xb, y_train[idx])
            except NonFiniteError as exc:
                raise NonFiniteError(f"epoch {epoch} step {step}: {exc}") from exc
            losses.append(loss)
            _sgd_step(current, grads, lr, config.momentum, config.weight_decay, momentum_buf)
        val_acc, _ = evaluate(graph, current, val_split)
        history.append({
            "epoch": epoch,
            "lr": lr,
            "train_loss": float(np.mean(losses)),
            "val_accuracy": float(val_acc),
        })
        if val_acc > best_acc:
            best_acc = val_acc
            best = current.copy()
    return best, history


def _sgd_step(weights, grads, lr, momentum, weight_decay, buffers):
    for name, grad in grads.tensors.items():
        grad = grad.astype(np.float32, copy=False)
        param = weights[name]
        if weight_decay:
            grad = grad + weight_decay * param
        buf = buffers.get(name)
        buf = grad if buf is None else momentum * buf + grad
        buffers[name] = buf
        weights[name] = param - lr * buf


def is_learnable(name: str) -> bool:
    return name.endswith(LEARNABLE_SUFFIXES)
