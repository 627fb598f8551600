"""
Desk-scale supervised training.

Label-smoothed cross entropy, a functional AdamW with decoupled weight decay,
a warmup + cosine learning-rate schedule, per-step stochastic depth and
top-1 evaluation.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from pydantic import BaseModel, Field, model_validator

from seqkit.datasets import Dataset
from seqkit.errors import ConfigError, EmptySequenceError, LabelError, ShapeError
from seqkit.logger import get_logger, log_epoch_summary
from seqkit.models import normalize_preset_name
from seqkit.sequencer import Model, model_forward
from seqkit.tensor import Array, Tape, Tensor, backward, log_softmax, mul, scale, sum_

logger = get_logger()

# Reference batch of the learning-rate scaling rule
LR_REFERENCE_BATCH = 512
LR_REFERENCE_VALUE = 5e-4


class TrainConfig(BaseModel):
    """Optimizer, schedule and regularization settings for one training run."""

    base_lr: float = Field(default=1e-3, gt=0)
    weight_decay: float = Field(default=0.05, ge=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    batch_size: int = Field(default=16, ge=1)
    epochs: int = Field(default=5, ge=1)
    warmup_epochs: int = Field(default=0, ge=0)
    # Start of the linear warmup ramp
    warmup_lr: float = Field(default=1e-6, ge=0)
    min_lr: float = Field(default=1e-6, ge=0)
    # Epochs held at min_lr after the cosine decay
    cooldown_epochs: int = Field(default=0, ge=0)
    label_smoothing: float = Field(default=0.1, ge=0, lt=1)
    # None keeps the probability stored in the model config
    drop_path: float | None = Field(default=None, ge=0, lt=1)
    clip_grad_norm: float | None = Field(default=None, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_schedule(self) -> TrainConfig:
        if self.warmup_epochs > self.epochs:
            raise ValueError("warmup_epochs cannot exceed epochs")
        return self

    @property
    def total_epochs(self) -> int:
        return self.epochs + self.cooldown_epochs

    @staticmethod
    def scaled_lr(batch_size: int) -> float:
        """Base learning rate ``batch_size / 512 * 5e-4``."""
        return batch_size / LR_REFERENCE_BATCH * LR_REFERENCE_VALUE

    @classmethod
    def for_preset(cls, name: str) -> TrainConfig:
        """ImageNet pre-training recipe for the S/M/L presets."""
        key = normalize_preset_name(name)
        if key not in _RECIPES:
            raise ConfigError(
                f"No training recipe for {name!r}; known: {', '.join(_RECIPES)}"
            )
        return cls(**{**_RECIPE_COMMON, **_RECIPES[key]})


_RECIPE_COMMON: dict[str, Any] = {
    "weight_decay": 0.05,
    "beta1": 0.9,
    "beta2": 0.999,
    "eps": 1e-8,
    "epochs": 300,
    "warmup_epochs": 20,
    "warmup_lr": 1e-6,
    "min_lr": 1e-6,
    "cooldown_epochs": 10,
    "label_smoothing": 0.1,
}

_RECIPES: dict[str, dict[str, Any]] = {
    "sequencer2d_s": {"base_lr": 2e-3, "batch_size": 2048, "drop_path": 0.1},
    "sequencer2d_m": {"base_lr": 1.5e-3, "batch_size": 1536, "drop_path": 0.2},
    "sequencer2d_l": {"base_lr": 1e-3, "batch_size": 1024, "drop_path": 0.4},
}


@dataclass
class OptimizerState:
    """AdamW moments per named parameter plus the step counter."""

    step: int = 0
    exp_avg: dict[str, Array] = field(default_factory=dict)
    exp_avg_sq: dict[str, Array] = field(default_factory=dict)

    @classmethod
    def zeros(cls, params: Mapping[str, Array | Tensor]) -> OptimizerState:
        def _zeros(p: Array | Tensor) -> Array:
            arr = p.data if isinstance(p, Tensor) else np.asarray(p)
            return np.zeros_like(arr)

        return cls(
            step=0,
            exp_avg={n: _zeros(p) for n, p in params.items()},
            exp_avg_sq={n: _zeros(p) for n, p in params.items()},
        )


@dataclass
class EpochMetrics:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    eval_acc: float | None = None

    def as_row(self) -> dict[str, Any]:
        return asdict(self)


def _check_labels(labels: Any, batch: int, num_classes: int) -> Array:
    y = np.asarray(labels)
    if y.shape != (batch,):
        raise ShapeError(f"expected {batch} labels, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        raise LabelError(f"labels must be integers, got {y.dtype}")
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise LabelError(f"labels must lie in [0, {num_classes}), got {y.min()}..{y.max()}")
    return y.astype(np.int64)


def smoothed_targets(labels: Array, num_classes: int, eps: float) -> Array:
    """``q = (1 - eps) * onehot + eps / K``."""
    q = np.full((labels.shape[0], num_classes), eps / num_classes)
    q[np.arange(labels.shape[0]), labels] += 1.0 - eps
    return q


def cross_entropy_smoothed(logits: Tensor, labels: Any, eps: float = 0.0) -> Tensor:
    """Batch mean of ``-sum_k q_k log softmax(logits)_k`` with label-smoothed ``q``."""
    if logits.ndim != 2:
        raise ShapeError(f"logits must be [B, K], got {logits.shape}")
    if not 0.0 <= eps < 1.0:
        raise ConfigError("label smoothing must lie in [0, 1)")
    b, k = logits.shape
    y = _check_labels(labels, b, k)
    q = Tensor(smoothed_targets(y, k, eps), dtype=logits.dtype)
    return scale(sum_(mul(log_softmax(logits), q)), -1.0 / b)


def adamw_step(
    params: Mapping[str, Array],
    grads: Mapping[str, Array],
    state: OptimizerState,
    cfg: TrainConfig,
    lr: float,
    decay: Mapping[str, bool] | None = None,
) -> tuple[dict[str, Array], OptimizerState]:
    """
    One AdamW update; returns new parameter values and a new state.

    Weight decay is decoupled: ``θ ← θ - lr·wd·θ`` is applied separately
    from the bias-corrected moment step. ``decay`` maps names to whether
    they are decayed (all of them by default).
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be > 0, got {lr}")
    step = state.step + 1
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1**step
    bc2 = 1.0 - b2**step
    new_params: dict[str, Array] = {}
    new_state = OptimizerState(step=step)
    for name, theta in params.items():
        if name not in grads:
            raise ShapeError(f"no gradient for parameter {name}")
        g = np.asarray(grads[name])
        if g.shape != theta.shape:
            raise ShapeError(f"{name}: gradient shape {g.shape} != parameter shape {theta.shape}")
        m = state.exp_avg.get(name, np.zeros_like(theta))
        v = state.exp_avg_sq.get(name, np.zeros_like(theta))
        if m.shape != theta.shape or v.shape != theta.shape:
            raise ShapeError(f"{name}: optimizer moments do not match shape {theta.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        wd = cfg.weight_decay if decay is None or decay.get(name, True) else 0.0
        updated = theta - lr * wd * theta
        updated = updated - lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        new_params[name] = updated.astype(theta.dtype, copy=False)
        new_state.exp_avg[name] = m
        new_state.exp_avg_sq[name] = v
    return new_params, new_state


def lr_at(step: int, cfg: TrainConfig, steps_per_epoch: int = 1) -> float:
    """
    Learning rate at optimizer step ``step`` (0-based).

    Linear ramp from ``warmup_lr`` to ``base_lr`` over the warmup epochs, then
    ``min_lr + (base_lr - min_lr)(1 + cos(pi * progress)) / 2`` until
    ``epochs`` is reached, then ``min_lr`` through the cooldown.
    """
    if step < 0:
        raise ValueError("step must be >= 0")
    warmup = cfg.warmup_epochs * steps_per_epoch
    decay = (cfg.epochs - cfg.warmup_epochs) * steps_per_epoch
    if step < warmup:
        return cfg.warmup_lr + (cfg.base_lr - cfg.warmup_lr) * step / warmup
    progress = (step - warmup) / decay if decay > 0 else 1.0
    if progress <= 0.0:
        return cfg.base_lr
    if progress >= 1.0:
        return cfg.min_lr
    return cfg.min_lr + 0.5 * (cfg.base_lr - cfg.min_lr) * (1.0 + math.cos(math.pi * progress))


def clip_grad_norm(
    grads: Mapping[str, Array], max_norm: float
) -> tuple[dict[str, Array], float]:
    """Scale gradients so their global L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float(np.sum(np.square(g))) for g in grads.values()))
    coef = max_norm / (total + 1e-6)
    if coef >= 1.0:
        return dict(grads), total
    return {name: g * coef for name, g in grads.items()}, total


def weight_decay_mask(params: Mapping[str, Tensor]) -> dict[str, bool]:
    """Decay matrices only; biases, norm scales and shifts are left alone."""
    return {name: p.ndim >= 2 and name != "pos_embed" for name, p in params.items()}


def _model_dtype(model: Model) -> np.dtype[Any]:
    return model.head.weight.dtype


def _check_dataset(model: Model, dataset: Dataset) -> None:
    if len(dataset) == 0:
        raise EmptySequenceError("Dataset is empty")
    k = model.config.num_classes
    if dataset.num_classes > k:
        raise ConfigError(f"dataset has {dataset.num_classes} classes, model has {k}")
    _check_labels(dataset.labels, len(dataset), k)


def predict(model: Model, images: Array, batch_size: int = 64) -> Array:
    """Logits ``[N, K]`` in inference mode."""
    dtype = _model_dtype(model)
    out = []
    for start in range(0, images.shape[0], batch_size):
        chunk = Tensor(images[start : start + batch_size], dtype=dtype)
        out.append(model_forward(model, chunk).data)
    return np.concatenate(out, axis=0)


def evaluate(model: Model, dataset: Dataset, batch_size: int = 64) -> float:
    """Top-1 accuracy; ties in the logits go to the lowest class index."""
    _check_dataset(model, dataset)
    logits = predict(model, dataset.images, batch_size)
    return float(np.mean(np.argmax(logits, axis=-1) == dataset.labels))


def train(
    model: Model,
    dataset: Dataset,
    cfg: TrainConfig,
    eval_dataset: Dataset | None = None,
    on_epoch: Callable[[EpochMetrics], None] | None = None,
) -> list[EpochMetrics]:
    """
    Train ``model`` in place and return one metrics entry per epoch.

    Shuffling and stochastic depth draw from one generator seeded with
    ``cfg.seed``, so a fixed seed and dataset reproduce the history exactly.
    """
    _check_dataset(model, dataset)
    if eval_dataset is not None:
        _check_dataset(model, eval_dataset)

    rng = np.random.default_rng(cfg.seed)
    dtype = _model_dtype(model)
    params = model.named_parameters()
    decay = weight_decay_mask(params)
    state = OptimizerState.zeros(params)
    n = len(dataset)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    logger.info(
        "Training %s on %d samples: %d epochs x %d steps",
        model.config.name,
        n,
        cfg.total_epochs,
        steps_per_epoch,
    )

    history: list[EpochMetrics] = []
    step = 0
    for epoch in range(1, cfg.total_epochs + 1):
        epoch_lr = lr_at(step, cfg, steps_per_epoch)
        loss_sum = 0.0
        correct = 0
        for images, labels in dataset.batches(cfg.batch_size, rng):
            x = Tensor(images, dtype=dtype)
            with Tape() as tape:
                logits = model_forward(model, x, training=True, rng=rng, drop_prob=cfg.drop_path)
                loss = cross_entropy_smoothed(logits, labels, cfg.label_smoothing)
            grads = backward(tape, loss).by_name(params)
            if cfg.clip_grad_norm is not None:
                grads, norm = clip_grad_norm(grads, cfg.clip_grad_norm)
                logger.debug("step %d grad norm %.4f", step, norm)

            lr = lr_at(step, cfg, steps_per_epoch)
            values = {name: p.data for name, p in params.items()}
            updated, state = adamw_step(values, grads, state, cfg, lr, decay)
            for name, p in params.items():
                p.assign(updated[name])

            loss_sum += loss.item() * len(labels)
            correct += int(np.sum(np.argmax(logits.data, axis=-1) == labels))
            step += 1

        metrics = EpochMetrics(
            epoch=epoch,
            lr=epoch_lr,
            train_loss=loss_sum / n,
            train_acc=correct / n,
            eval_acc=evaluate(model, eval_dataset) if eval_dataset is not None else None,
        )
        log_epoch_summary(
            metrics.epoch, metrics.lr, metrics.train_loss, metrics.train_acc, metrics.eval_acc
        )
        history.append(metrics)
        if on_epoch is not None:
            on_epoch(metrics)
    return history
