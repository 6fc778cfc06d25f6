"""Supervised training: loss, gradients, optimizers, fit and evaluate."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .augment import AugmentConfig, AugmentedBatch, build_augmented_batch
from .graph import MULTICLASS, LabelSpec, SubgraphDataset
from .model import DivergenceError, ModelConfig, backward, forward, init_params
from .rng import Stream

OPTIMIZERS = ("adam", "sgd_momentum")

# epoch slot for stochastic evaluation streams, outside any training epoch
EVAL_EPOCH = 0xFFFFFFFF


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    learning_rate: float = 0.01
    weight_decay: float = 0.0
    optimizer: str = "adam"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    master_seed: int = 0
    eval_every: int = 1
    early_stop_patience: Optional[int] = None
    # > 0: evaluate by averaging logits over this many stochastic multi-view draws
    eval_draws: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.eval_every < 1:
            raise ValueError("epochs must be >= 0, batch_size and eval_every >= 1")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("learning_rate and weight_decay must be >= 0")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in 64 bits")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")
        if self.eval_draws < 0:
            raise ValueError("eval_draws must be >= 0")


@dataclass(frozen=True)
class MetricsRecord:
    seed: int
    epoch: int
    split: str
    loss: float
    micro_f1: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, history: list, diagnostic: dict):
        super().__init__(message)
        self.history = history
        self.diagnostic = diagnostic


# -- loss and metric -------------------------------------------------------


def loss_and_grad(logits: np.ndarray, y: np.ndarray, label_spec: LabelSpec) -> tuple[float, np.ndarray]:
    """Loss and its gradient w.r.t. the logits.

    ``y`` is the ``(B, C)`` 0/1 indicator matrix. Multiclass: mean softmax
    cross-entropy. Multilabel: sigmoid binary cross-entropy averaged over
    every (sample, class) pair.
    """
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise DivergenceError("non-finite logits")
    y = np.asarray(y, dtype=np.float64)
    if z.shape != y.shape:
        raise ValueError(f"logits shape {z.shape} != labels shape {y.shape}")
    b = z.shape[0]
    if label_spec.task_kind == MULTICLASS:
        shifted = z - z.max(axis=1, keepdims=True)
        logsum = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        logp = shifted - logsum
        loss = -(y * logp).sum() / b
        grad = (np.exp(logp) - y) / b
    else:
        loss = (np.logaddexp(0.0, z) - y * z).mean()
        grad = (0.5 * (1.0 + np.tanh(0.5 * z)) - y) / z.size
    return float(loss), grad


def loss(logits: np.ndarray, y: np.ndarray, label_spec: LabelSpec) -> float:
    return loss_and_grad(logits, y, label_spec)[0]


def predictions(logits: np.ndarray, label_spec: LabelSpec) -> np.ndarray:
    """0/1 decisions: argmax for multiclass, logit > 0 for multilabel."""
    logits = np.asarray(logits)
    if label_spec.task_kind == MULTICLASS:
        out = np.zeros(logits.shape, dtype=np.int64)
        out[np.arange(len(logits)), np.argmax(logits, axis=1)] = 1
        return out
    return (logits > 0).astype(np.int64)


def micro_f1(pred: np.ndarray, truth: np.ndarray) -> float:
    """Micro-averaged F1 over all (sample, class) decisions.

    When there are no positives in either input the score is 1.0.
    """
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2 * tp / denom


# -- gradients -------------------------------------------------------------


def gradients(params, batch: AugmentedBatch, y: np.ndarray, model_config: ModelConfig, label_spec: LabelSpec):
    """``(loss, grads, logits)`` for one assembled batch."""
    cache = forward(params, batch, model_config)
    value, dlogits = loss_and_grad(cache.logits, y, label_spec)
    return value, backward(cache, dlogits, params, model_config), cache.logits


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def finite_difference(params, batch, y, model_config, label_spec, step: float = 1e-5) -> dict[str, np.ndarray]:
    """Central differences of the loss over every parameter entry."""
    out = {}
    for name, p in params.items():
        g = np.zeros_like(p, dtype=np.float64)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + step
            up = loss(forward(params, batch, model_config).logits, y, label_spec)
            p[idx] = orig - step
            down = loss(forward(params, batch, model_config).logits, y, label_spec)
            p[idx] = orig
            g[idx] = (up - down) / (2 * step)
        out[name] = g
    return out


def gradcheck(params, batch, y, model_config, label_spec, step: float = 1e-5, corrupt: str | None = None) -> dict[str, float]:
    """Max relative error per parameter between analytic and numeric gradients.

    ``corrupt`` names a parameter whose analytic gradient is perturbed before
    comparison (negative control).
    """
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    _, analytic, _ = gradients(params, batch, y, model_config, label_spec)
    if corrupt is not None:
        if corrupt not in analytic:
            raise KeyError(f"unknown parameter {corrupt!r}")
        analytic[corrupt] = analytic[corrupt] + 1e-2 * (1.0 + np.abs(analytic[corrupt]))
    numeric = finite_difference(params, batch, y, model_config, label_spec, step)
    return {name: float(relative_error(analytic[name], numeric[name]).max(initial=0.0)) for name in analytic}


# -- optimizers ------------------------------------------------------------


class SGDMomentum:
    def __init__(self, lr: float, momentum: float = 0.9):
        self.lr = lr
        self.momentum = momentum
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict) -> None:
        if self.lr == 0:
            return
        for name, g in grads.items():
            v = self.velocity.get(name)
            v = g.copy() if v is None else self.momentum * v + g
            self.velocity[name] = v
            params[name] -= (self.lr * v).astype(params[name].dtype)


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict) -> None:
        if self.lr == 0:
            return
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for name, g in grads.items():
            m = self.beta1 * self.m.get(name, 0.0) + (1 - self.beta1) * g
            v = self.beta2 * self.v.get(name, 0.0) + (1 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            params[name] -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(params[name].dtype)


def make_optimizer(config: TrainConfig):
    if config.optimizer == "adam":
        return Adam(config.learning_rate, config.beta1, config.beta2, config.eps)
    return SGDMomentum(config.learning_rate, config.momentum)


# -- evaluation and fitting ------------------------------------------------


def _chunks(idx: np.ndarray, size: int) -> list[np.ndarray]:
    return [idx[i:i + size] for i in range(0, len(idx), size)]


def evaluate(
    params,
    dataset: SubgraphDataset,
    split: str,
    model_config: ModelConfig,
    *,
    batch_size: int = 16,
    seed: int = 0,
    epoch: int = -1,
    augment_config: AugmentConfig | None = None,
    draws: int = 0,
) -> MetricsRecord:
    """Loss and micro-F1 on one split.

    Subgraphs are batched contiguously in split order (batch composition
    decides which original nodes carry label 1). With ``draws == 0`` only the
    original view is used; otherwise logits are averaged over ``draws``
    multi-view batches drawn with ``augment_config``.
    """
    idx = dataset.indices(split) if dataset.split is not None else np.arange(len(dataset))
    if len(idx) == 0:
        raise ValueError(f"split {split!r} is empty")
    plain = AugmentConfig()
    spec = dataset.label_spec
    y = spec.indicator([dataset.labels[i] for i in idx])
    logits = []
    for b, chunk in enumerate(_chunks(idx, batch_size)):
        subs = [dataset.subgraphs[i] for i in chunk]
        if draws and augment_config is not None:
            acc = 0.0
            for draw in range(draws):
                root = Stream.root(seed, "mask").child(EVAL_EPOCH - draw, b)
                acc = acc + forward(params, build_augmented_batch(dataset.graph, subs, augment_config, root), model_config).logits
            logits.append(acc / draws)
        else:
            logits.append(forward(params, build_augmented_batch(dataset.graph, subs, plain), model_config).logits)
    logits = np.concatenate(logits)
    return MetricsRecord(seed, epoch, split, loss(logits, y, spec), micro_f1(predictions(logits, spec), y))


def fit(
    dataset: SubgraphDataset,
    augment_config: AugmentConfig,
    model_config: ModelConfig,
    train_config: TrainConfig,
    *,
    on_record: Callable[[MetricsRecord], None] | None = None,
    eval_splits: Sequence[str] = ("train", "val", "test"),
):
    """Train from scratch; returns ``(params, history)``.

    Each epoch emits a ``"fit"`` record (mean training-batch loss before each
    update, micro-F1 of the training-pass predictions). Every ``eval_every``
    epochs, and after the last, :func:`evaluate` records follow for each
    non-empty split in ``eval_splits``.
    """
    seed = train_config.master_seed
    spec = dataset.label_spec
    params = init_params(model_config, seed)
    history: list[MetricsRecord] = []
    if train_config.epochs == 0:
        return params, history
    train_idx = dataset.indices("train") if dataset.split is not None else np.arange(len(dataset))
    if len(train_idx) == 0:
        raise ValueError("dataset has an empty train split")
    if dataset.split is None:
        splits = [s for s in eval_splits if s == "train"]
    else:
        splits = [s for s in eval_splits if len(dataset.indices(s))]
    opt = make_optimizer(train_config)
    y_all = spec.indicator(dataset.labels)
    shuffle_root = Stream.root(seed, "shuffle")
    mask_root = Stream.root(seed, "mask")
    best, since_best = -1.0, 0

    def emit(rec: MetricsRecord) -> None:
        history.append(rec)
        if on_record is not None:
            on_record(rec)

    def diverged(err, epoch, b) -> TrainingDiverged:
        diag = {"seed": seed, "epoch": epoch, "batch": b, "error": str(err)}
        where = f"epoch {epoch}" + ("" if b is None else f", batch {b}")
        return TrainingDiverged(f"training diverged at {where}: {err}", list(history), diag)

    for epoch in range(train_config.epochs):
        order = train_idx[shuffle_root.child(epoch).permutation(len(train_idx))]
        total, preds, truth = 0.0, [], []
        for b, chunk in enumerate(_chunks(order, train_config.batch_size)):
            subs = [dataset.subgraphs[i] for i in chunk]
            batch = build_augmented_batch(dataset.graph, subs, augment_config, mask_root.child(epoch, b))
            y = y_all[chunk]
            try:
                value, grads, logits = gradients(params, batch, y, model_config, spec)
            except DivergenceError as err:
                raise diverged(err, epoch, b) from err
            if train_config.weight_decay:
                for name in grads:
                    grads[name] = grads[name] + train_config.weight_decay * params[name]
            opt.step(params, grads)
            total += value * len(chunk)
            preds.append(predictions(logits, spec))
            truth.append(y)
        emit(MetricsRecord(seed, epoch, "fit", total / len(train_idx), micro_f1(np.concatenate(preds), np.concatenate(truth))))

        last = epoch == train_config.epochs - 1
        if (epoch + 1) % train_config.eval_every == 0 or last:
            for split in splits:
                try:
                    rec = evaluate(
                        params, dataset, split, model_config,
                        batch_size=train_config.batch_size, seed=seed, epoch=epoch,
                        augment_config=augment_config, draws=train_config.eval_draws,
                    )
                except DivergenceError as err:
                    raise diverged(err, epoch, None) from err
                emit(rec)
                if split == "val" and train_config.early_stop_patience:
                    if rec.micro_f1 > best:
                        best, since_best = rec.micro_f1, 0
                    else:
                        since_best += 1
            if train_config.early_stop_patience and since_best >= train_config.early_stop_patience:
                break
    return params, history

