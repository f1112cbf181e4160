"""Optimizers, task loss plus invariance penalty, metrics, and holdout selection."""

from __future__ import annotations

import dataclasses
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, TrainingDiverged
from .models import pad_batch
from .regularizers import (ElementPairSampler, SamplerConfig, materialize, sample_bank, sire_penalty,
                           sub_penalty)
from .rng import stream
from .tensor import Tensor

OPTIMIZERS = ("adam", "sgd")
REGULARIZERS = ("none", "sire", "sub")
LOSSES = ("l1", "mse", "cross-entropy")
CSV_HEADER = "epoch,task_loss,reg_value,train_metric,holdout_metric"


@dataclass(frozen=True)
class TrainingConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    epochs: int = 1000
    batch_size: int = 32
    lam: float = 0.0
    regularizer: str = "none"
    loss: str = "l1"
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    seed: int = 0
    clip_norm: float | None = 5.0
    detach_states: bool = False
    sub_samples: int | None = None  # SUB draws per batch; defaults to batch_size

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if self.regularizer not in REGULARIZERS:
            raise ConfigError(f"regularizer must be one of {REGULARIZERS}")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be at least 1")
        if self.lam < 0:
            raise ConfigError("lambda must be non-negative")

    def replace(self, **kw) -> "TrainingConfig":
        return dataclasses.replace(self, **kw)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# optimizers


def sgd_step(params, grads, state: dict, lr: float) -> None:
    for p, g in zip(params, grads):
        if g is not None:
            p.data = p.data - lr * g


def adam_step(params, grads, state: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8) -> None:
    """One bias-corrected Adam update; ``state`` holds ``t``, ``m``, ``v``."""
    t = state.get("t", 0) + 1
    state["t"] = t
    m = state.setdefault("m", [np.zeros_like(p.data) for p in params])
    v = state.setdefault("v", [np.zeros_like(p.data) for p in params])
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        m[i] = beta1 * m[i] + (1.0 - beta1) * g
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
        p.data = p.data - lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps)


def clip_grad_norm(grads, max_norm: float) -> float:
    """Scale ``grads`` in place to global L2 norm ``max_norm``; returns the original norm."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads if g is not None))
    if norm > max_norm:
        k = max_norm / norm
        for g in grads:
            if g is not None:
                g *= k
    return norm


class Optimizer:
    def __init__(self, params, cfg: TrainingConfig):
        self.params = list(params)
        self.cfg = cfg
        self.state = {}

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        grads = [p.grad for p in self.params]
        if self.cfg.clip_norm is not None:
            clip_grad_norm(grads, self.cfg.clip_norm)
        if self.cfg.optimizer == "adam":
            adam_step(self.params, grads, self.state, self.cfg.learning_rate)
        else:
            sgd_step(self.params, grads, self.state, self.cfg.learning_rate)


# ---------------------------------------------------------------------------
# losses and metrics


def task_loss(model, X, lengths, y, loss: str) -> Tensor:
    pred = model.forward(X, lengths)
    if loss == "cross-entropy":
        if model.output != "logit":
            raise ConfigError("cross-entropy needs a model with a logit output")
        if np.any((y != 0) & (y != 1)):
            raise ConfigError("cross-entropy needs 0/1 labels")
        return T.bce_with_logits(pred, y)
    if model.output == "logit":
        raise ConfigError(f"{loss} loss does not apply to a logit-output model")
    diff = T.sub(pred, Tensor._wrap(np.asarray(y, dtype=np.float64)))
    return T.mean(T.abs(diff)) if loss == "l1" else T.mean(T.square(diff))


def penalty(model, dataset, cfg: TrainingConfig, rng, pair_sampler=None) -> Tensor:
    if cfg.regularizer == "sire":
        bank = sample_bank(dataset, cfg.sampler, rng)
        if cfg.detach_states:
            with T.no_grad():
                bank = dataclasses.replace(bank, states=materialize(model, bank).data)
        sampler = pair_sampler or ElementPairSampler(dataset)
        pairs = len(bank) * cfg.sampler.pairs_per_state
        return sire_penalty(model, bank, sampler, pairs, rng, detach=cfg.detach_states)
    if cfg.regularizer == "sub":
        return sub_penalty(model, dataset, cfg.sub_samples or cfg.batch_size, rng, cfg.sampler)
    raise ConfigError(f"no penalty for regularizer {cfg.regularizer!r}")


def total_loss(model, batch, cfg: TrainingConfig, rng=None, reg_data=None, pair_sampler=None):
    """Task loss plus ``lam * penalty``.

    Returns ``(total, task_value, reg_value)``. With ``lam == 0`` or no
    regularizer the penalty is not evaluated at all. ``reg_data`` is the
    dataset the penalty samples from (defaults to ``batch``).
    """
    X, lengths = pad_batch(batch.sequences)
    task = task_loss(model, X, lengths, batch.labels, cfg.loss)
    if cfg.regularizer == "none" or cfg.lam == 0:
        return task, task.item(), 0.0
    reg = penalty(model, reg_data if reg_data is not None else batch, cfg,
                  rng if rng is not None else stream(cfg.seed, "regularizer"), pair_sampler)
    return T.add(task, T.scale(reg, cfg.lam)), task.item(), reg.item()


def predict(model, dataset, chunk: int = 4096) -> np.ndarray:
    out = []
    with T.no_grad():
        for start in range(0, len(dataset), chunk):
            X, lengths = pad_batch(dataset.sequences[start:start + chunk])
            out.append(model.forward(X, lengths).data)
    return np.concatenate(out) if out else np.zeros(0)


def round_half_away(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def evaluate_accuracy(model, dataset) -> float:
    """Zero-one accuracy: 0.5 threshold for parity, nearest integer otherwise."""
    if len(dataset) == 0:
        return 0.0
    raw = predict(model, dataset)
    if dataset.is_classification:
        score = T._sigmoid(raw) if model.output == "logit" else raw
        pred = (score >= 0.5).astype(np.float64)
    else:
        pred = round_half_away(raw)
    return float(np.mean(pred == dataset.labels))


def evaluate_rmse(model, dataset) -> float:
    raw = predict(model, dataset)
    return float(np.sqrt(np.mean((raw - dataset.labels) ** 2)))


def metric_for(task: str):
    """(metric function, higher_is_better) for a task."""
    if task == "variance":
        return evaluate_rmse, False
    return evaluate_accuracy, True


# ---------------------------------------------------------------------------
# the training loop


@dataclass
class RunReport:
    rows: list
    config: dict
    metric: str
    wall_seconds: float = 0.0
    test_metric: float | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for row in self.rows:
            buf.write(",".join([str(row[0])] + [repr(float(v)) for v in row[1:]]) + "\n")
        return buf.getvalue()

    @property
    def final_holdout(self) -> float:
        return self.rows[-1][4]


def fit(model, train, holdout, cfg: TrainingConfig, pair_sampler=None, progress=None) -> RunReport:
    """Train ``model`` in place; one report row per epoch.

    Randomness comes from named streams of ``cfg.seed`` ("batches",
    "regularizer"), so switching the penalty on or off never changes the
    batch order.
    """
    started = time.perf_counter()
    metric, _ = metric_for(train.task)
    opt = Optimizer(model.parameters(), cfg)
    batch_rng = stream(cfg.seed, "batches")
    reg_rng = stream(cfg.seed, "regularizer")
    rows = []
    n = len(train)
    for epoch in range(1, cfg.epochs + 1):
        order = batch_rng.permutation(n)
        task_sum = reg_sum = 0.0
        batches = 0
        for start in range(0, n, cfg.batch_size):
            batch = train.subset(order[start:start + cfg.batch_size])
            loss, task_val, reg_val = total_loss(model, batch, cfg, reg_rng, train, pair_sampler)
            if not (math.isfinite(task_val) and math.isfinite(reg_val)):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}: task={task_val} reg={reg_val}")
            opt.zero_grad()
            T.backward(loss)
            opt.step()
            task_sum += task_val
            reg_sum += reg_val
            batches += 1
        row = (epoch, task_sum / batches, reg_sum / batches, metric(model, train), metric(model, holdout))
        rows.append(row)
        if progress is not None:
            progress(row)
    return RunReport(rows, cfg.as_dict(), metric.__name__, time.perf_counter() - started)


@dataclass
class Selection:
    best_index: int
    best_config: TrainingConfig
    reports: list
    models: list


def holdout_select(configs, dataset, model_factory, holdout_fraction: float = 0.2, split_seed: int = 0,
                   pair_sampler=None) -> Selection:
    """Train every config on one fixed train split and keep the best on holdout.

    Ties go to the smaller ``lam``, then to the earlier config.
    """
    configs = list(configs)
    if not configs:
        raise ConfigError("holdout_select needs at least one config")
    train, hold = dataset.split(holdout_fraction, stream(split_seed, "holdout-split"))
    _, higher = metric_for(dataset.task)
    reports, models = [], []
    for cfg in configs:
        model = model_factory(cfg)
        reports.append(fit(model, train, hold, cfg, pair_sampler))
        models.append(model)
    sign = 1.0 if higher else -1.0
    best = min(range(len(configs)),
               key=lambda i: (-sign * reports[i].final_holdout, configs[i].lam, i))
    return Selection(best, configs[best], reports, models)
