"""Training loop with gradient accumulation and validation-based model selection."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..errors import NonFiniteError, TrainingAborted, ValidationError
from ..tasks import get_task
from .model import LOSSES, ModelState, backward, forward, init_model, lenet1d_architecture, sigmoid
from .optim import AdamWState, adamw_step

logger = logging.getLogger(__name__)

NORM_EPS = 1e-8
PREDICT_CHUNK = 256


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 50
    effective_batch: int = 512
    micro_batch: int = 64
    weight_decay: float = 0.01
    betas: tuple = (0.9, 0.999)
    epsilon: float = 1e-8
    seed: int = 0
    selection_metric: Optional[str] = None  # None: derived from the task

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.micro_batch < 1 or self.effective_batch < 1:
            raise ValidationError("batch sizes must be positive")
        if self.effective_batch % self.micro_batch:
            raise ValidationError(
                f"effective_batch {self.effective_batch} is not divisible by "
                f"micro_batch {self.micro_batch}"
            )
        if self.selection_metric not in (None, "macro_auroc", "neg_mae"):
            raise ValidationError(f"unknown selection metric {self.selection_metric!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


@dataclass
class TrainHistory:
    selection_metric: str
    initial_train_loss: float
    epochs: list = field(default_factory=list)
    selected_epoch: Optional[int] = None
    n_steps: int = 0

    @property
    def train_losses(self):
        return [e["train_loss"] for e in self.epochs]

    @property
    def val_metrics(self):
        return [e["val_metric"] for e in self.epochs]

    def to_dict(self) -> dict:
        return asdict(self)


def normalize_segments(X):
    """Per-segment z-score: subtract the mean, divide by the (guarded) SD."""
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=-1, keepdims=True)
    sd = X.std(axis=-1, keepdims=True)
    return (X - mean) / np.maximum(sd, NORM_EPS)


def _iter_length_groups(X):
    """Yield ``(row indices, stacked rows)`` grouping equal-length inputs."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        yield np.arange(X.shape[0]), X
        return
    rows = [np.asarray(r, dtype=np.float64).ravel() for r in X]
    by_len = {}
    for i, r in enumerate(rows):
        by_len.setdefault(r.size, []).append(i)
    for length in sorted(by_len):
        idx = np.asarray(by_len[length])
        yield idx, np.stack([rows[i] for i in idx])


def predict_raw(model: ModelState, X) -> np.ndarray:
    """Network outputs for raw segments: normalised inputs, de-standardised targets."""
    n = len(X)
    out = np.empty((n, model.output_dim))
    for idx, rows in _iter_length_groups(X):
        rows = normalize_segments(rows)
        for start in range(0, len(idx), PREDICT_CHUNK):
            sl = slice(start, start + PREDICT_CHUNK)
            out[idx[sl]] = forward(model, rows[sl][:, None, :])
    if model.target_scale is not None:
        out = out * model.target_scale + model.target_offset
    return out


def predict(model: ModelState, X, task) -> np.ndarray:
    """Scores: sigmoid probabilities for classification, raw values for regression."""
    task = get_task(task)
    if model.output_dim != task.output_dim:
        raise ValidationError(
            f"model has {model.output_dim} outputs but task {task} needs {task.output_dim}"
        )
    out = predict_raw(model, X)
    return sigmoid(out) if task.is_classification else out


def _score(task, metric, model, X, Y):
    from ..metrics import evaluate

    scores = predict(model, X, task)
    report = evaluate(task, scores, Y)
    if metric == "macro_auroc":
        return -math.inf if report.macro_auroc is None else report.macro_auroc
    return -report.macro_mae


def accumulated_gradients(model, X, Y, loss_kind, micro_batch):
    """Sample-weighted mean of micro-batch gradients over the rows of ``X``.

    Micro-batch results are reduced in index order, so the result is
    deterministic.
    """
    n = X.shape[0]
    total_loss = 0.0
    acc = None
    for start in range(0, n, micro_batch):
        xb = X[start : start + micro_batch]
        yb = Y[start : start + micro_batch]
        w = xb.shape[0]
        loss, grads = backward(model, xb[:, None, :], yb, loss_kind)
        total_loss += w * loss
        if acc is None:
            acc = {k: w * g for k, g in grads.items()}
        else:
            for k, g in grads.items():
                acc[k] += w * g
    return total_loss / n, {k: g / n for k, g in acc.items()}


def train(config: TrainConfig, task, train, validation, arch=None):
    """Fit a LeNet1D model and return ``(best_model, history)``.

    ``train`` and ``validation`` are ``(X, Y)`` pairs of raw segments
    (``(n, length)``) and task targets. Each epoch shuffles the training set,
    accumulates micro-batch gradients up to ``effective_batch`` samples per
    AdamW step, then scores the validation set. The parameters of the best
    epoch are returned; ties keep the earliest.
    """
    task = get_task(task)
    metric = config.selection_metric or task.selection_metric
    X_tr, Y_tr = train
    X_va, Y_va = validation
    X_tr = np.asarray(X_tr, dtype=np.float64)
    Y_tr = np.asarray(Y_tr, dtype=np.float64).reshape(len(X_tr), -1)
    Y_va = np.asarray(Y_va, dtype=np.float64).reshape(len(X_va), -1)
    if len(X_tr) == 0 or len(X_va) == 0:
        raise ValidationError("training and validation sets must be non-empty")
    if Y_tr.shape[1] != task.output_dim:
        raise ValidationError(f"targets have {Y_tr.shape[1]} columns, task needs {task.output_dim}")

    rng = np.random.default_rng(config.seed)
    arch = arch or lenet1d_architecture(task.output_dim)
    model = init_model(arch, rng)
    model.extra["input_normalization"] = "per_segment_zscore"
    if not task.is_classification:
        offset = Y_tr.mean(axis=0)
        scale = np.maximum(Y_tr.std(axis=0), NORM_EPS)
        model.target_offset, model.target_scale = offset, scale
        Y_fit = (Y_tr - offset) / scale
    else:
        Y_fit = Y_tr
    Xn = normalize_segments(X_tr)

    initial_loss = _dataset_loss(model, Xn, Y_fit, task.loss_kind)
    history = TrainHistory(metric, initial_loss)
    opt = AdamWState.zeros_like(model.params)
    best_score, best_model = -math.inf, None
    n = Xn.shape[0]

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        step_losses = []
        for start in range(0, n, config.effective_batch):
            idx = order[start : start + config.effective_batch]
            try:
                loss, grads = accumulated_gradients(
                    model, Xn[idx], Y_fit[idx], task.loss_kind, config.micro_batch
                )
            except NonFiniteError as exc:
                raise TrainingAborted(
                    f"epoch {epoch}, step {opt.step + 1}: {exc}; aborting"
                ) from exc
            model.params, opt = adamw_step(
                model.params, grads, opt, lr=config.learning_rate, betas=config.betas,
                eps=config.epsilon, weight_decay=config.weight_decay,
            )
            step_losses.append(loss)
        score = _score(task, metric, model, X_va, Y_va)
        history.epochs.append(
            {"epoch": epoch, "train_loss": float(np.mean(step_losses)),
             "val_metric": float(score), "n_steps": len(step_losses)}
        )
        history.n_steps = opt.step
        logger.info("epoch %d train_loss %.5f %s %.5f", epoch, np.mean(step_losses), metric, score)
        if best_model is None or score > best_score:
            best_score, best_model = score, model.copy()
            history.selected_epoch = epoch
    return best_model, history


def _dataset_loss(model, Xn, Y, loss_kind):
    total = 0.0
    for start in range(0, Xn.shape[0], PREDICT_CHUNK):
        xb = Xn[start : start + PREDICT_CHUNK]
        yb = Y[start : start + PREDICT_CHUNK]
        total += xb.shape[0] * LOSSES[loss_kind](forward(model, xb[:, None, :]), yb)
    return total / Xn.shape[0]
