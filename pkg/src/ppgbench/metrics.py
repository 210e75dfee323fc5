"""Evaluation metrics: tie-corrected AUROC, operating points, MAE, Bland-Altman."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .errors import ValidationError
from .tasks import get_task
from .validation import check_paired

LOA_Z = 1.96
OPERATING_LEVEL = 0.8


def _binary_labels(labels):
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if not np.all((labels == 0) | (labels == 1)):
        raise ValidationError("labels must be 0 or 1")
    return labels.astype(bool)


def auroc(scores, labels) -> Optional[float]:
    """Mann-Whitney AUROC with ties counted as one half.

    Returns ``None`` when either class is empty.
    """
    scores, labels = check_paired(scores, labels, "scores", "labels")
    pos = _binary_labels(labels)
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    if not np.all(np.isfinite(scores)):
        raise ValidationError("scores contain non-finite values")
    ranks = rankdata(scores)  # average ranks resolve ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def macro_average(values) -> Optional[float]:
    """Mean over defined values; ``None`` if nothing is defined."""
    defined = [float(v) for v in values if v is not None and not _isnan(v)]
    if not defined:
        return None
    return math.fsum(defined) / len(defined)


def _isnan(v):
    return isinstance(v, float) and math.isnan(v)


@dataclass(frozen=True)
class OperatingPoint:
    sensitivity: float
    specificity: float
    threshold: float


def operating_point(scores, labels, min_specificity=None, min_sensitivity=None):
    """Best threshold under a sensitivity or specificity floor.

    A score ``>= threshold`` is called positive. Candidate thresholds are the
    distinct scores plus ``+inf``. Among candidates meeting the floor, the
    free metric is maximised; ties go to the larger constrained metric, then
    the lower threshold. Returns ``None`` if no candidate meets the floor.
    """
    if (min_specificity is None) == (min_sensitivity is None):
        raise ValidationError("give exactly one of min_specificity / min_sensitivity")
    scores, labels = check_paired(scores, labels, "scores", "labels")
    pos = _binary_labels(labels)
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("operating point needs both positive and negative samples")

    thresholds = np.append(np.unique(scores), np.inf)
    pos_sorted = np.sort(scores[pos])
    neg_sorted = np.sort(scores[~pos])
    tp = n_pos - np.searchsorted(pos_sorted, thresholds, side="left")
    fp = n_neg - np.searchsorted(neg_sorted, thresholds, side="left")
    sens = tp / n_pos
    spec = (n_neg - fp) / n_neg

    if min_specificity is not None:
        ok, free, constrained = spec >= min_specificity, sens, spec
    else:
        ok, free, constrained = sens >= min_sensitivity, spec, sens
    if not ok.any():
        return None
    idx = np.flatnonzero(ok)
    # lexsort: last key is primary
    best = idx[np.lexsort((thresholds[idx], -constrained[idx], -free[idx]))[0]]
    return OperatingPoint(float(sens[best]), float(spec[best]), float(thresholds[best]))


def confusion_at(scores, labels, threshold):
    """(sensitivity, specificity) of the rule ``score >= threshold``."""
    scores, labels = check_paired(scores, labels)
    pos = _binary_labels(labels)
    called = scores >= threshold
    return float(called[pos].mean()), float((~called[~pos]).mean())


def roc_curve(scores, labels):
    """(false positive rate, true positive rate, thresholds), from +inf downward."""
    scores, labels = check_paired(scores, labels)
    pos = _binary_labels(labels)
    thresholds = np.append(np.inf, np.unique(scores)[::-1])
    tpr = np.array([(scores[pos] >= t).mean() for t in thresholds])
    fpr = np.array([(scores[~pos] >= t).mean() for t in thresholds])
    return fpr, tpr, thresholds


def mae(pred, ref) -> float:
    pred, ref = check_paired(pred, ref, "pred", "ref")
    if pred.size == 0:
        raise ValidationError("MAE of empty sequences is undefined")
    return float(np.mean(np.abs(pred - ref)))


@dataclass(frozen=True)
class BlandAltman:
    bias: float
    loa_low: float
    loa_high: float
    sd: float


def bland_altman(pred, ref) -> BlandAltman:
    """Bias and 95% limits of agreement of ``pred - ref`` (sample SD, ddof=1)."""
    pred, ref = check_paired(pred, ref, "pred", "ref")
    if pred.size < 2:
        raise ValidationError("Bland-Altman needs at least two pairs")
    d = pred - ref
    bias = float(np.mean(d))
    sd = float(np.std(d, ddof=1))
    return BlandAltman(bias, bias - LOA_Z * sd, bias + LOA_Z * sd, sd)


def median_baseline(train_targets) -> float:
    """Median of the training targets (mean of the middle pair for even counts)."""
    t = np.asarray(train_targets, dtype=np.float64).ravel()
    if t.size == 0:
        raise ValidationError("median baseline needs at least one training target")
    return float(np.median(t))


# --- reports ---------------------------------------------------------------

REPORT_VERSION = 1


@dataclass
class LabelMetrics:
    label: str
    n_pos: int
    n_neg: int
    auroc: Optional[float] = None
    sens_at_spec80: Optional[float] = None
    spec_at_sens80: Optional[float] = None
    threshold_spec80: Optional[float] = None
    threshold_sens80: Optional[float] = None
    sufficient: bool = True


@dataclass
class RegressionMetrics:
    label: str
    n: int
    mae: float
    bias: Optional[float]
    loa_low: Optional[float]
    loa_high: Optional[float]


@dataclass
class EvalReport:
    task: str
    n_samples: int
    per_label: list = field(default_factory=list)
    macro_auroc: Optional[float] = None
    regression: list = field(default_factory=list)

    @property
    def macro_mae(self) -> Optional[float]:
        return macro_average([r.mae for r in self.regression])

    def to_dict(self) -> dict:
        return {
            "report_version": REPORT_VERSION,
            "task": self.task,
            "n_samples": self.n_samples,
            "macro_auroc": self.macro_auroc,
            "per_label": [asdict(m) for m in self.per_label],
            "regression": [asdict(r) for r in self.regression],
        }


def classification_metrics(label, scores, targets, min_per_class=1) -> LabelMetrics:
    targets = _binary_labels(targets)
    n_pos = int(targets.sum())
    n_neg = int(targets.size - n_pos)
    m = LabelMetrics(label, n_pos, n_neg)
    if n_pos < max(min_per_class, 1) or n_neg < max(min_per_class, 1):
        m.sufficient = False
        return m
    m.auroc = auroc(scores, targets)
    op = operating_point(scores, targets, min_specificity=OPERATING_LEVEL)
    if op is not None:
        m.sens_at_spec80, m.threshold_spec80 = op.sensitivity, op.threshold
    op = operating_point(scores, targets, min_sensitivity=OPERATING_LEVEL)
    if op is not None:
        m.spec_at_sens80, m.threshold_sens80 = op.specificity, op.threshold
    return m


def regression_metrics(label, pred, ref) -> RegressionMetrics:
    pred, ref = check_paired(pred, ref)
    if pred.size >= 2:
        ba = bland_altman(pred, ref)
        bias, lo, hi = ba.bias, ba.loa_low, ba.loa_high
    else:
        bias = lo = hi = None
    return RegressionMetrics(label, int(pred.size), mae(pred, ref), bias, lo, hi)


def evaluate(task, predictions, targets, min_per_class=1) -> EvalReport:
    """Per-label metrics for a task's predictions against its targets.

    Labels without both classes (or with fewer than ``min_per_class`` of
    either) carry no metrics and are skipped by the macro average.
    """
    task = get_task(task)
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.ndim == 1:
        predictions = predictions[:, None]
    if targets.ndim == 1:
        targets = targets[:, None]
    if predictions.shape != targets.shape or predictions.shape[1:] != (task.output_dim,):
        raise ValidationError(
            f"predictions {predictions.shape} / targets {targets.shape} do not fit task "
            f"{task} with {task.output_dim} outputs"
        )
    report = EvalReport(task.kind.value, int(predictions.shape[0]))
    if task.is_classification:
        for j, name in enumerate(task.output_names):
            report.per_label.append(
                classification_metrics(name, predictions[:, j], targets[:, j], min_per_class)
            )
        report.macro_auroc = macro_average([m.auroc for m in report.per_label])
    else:
        if predictions.shape[0] == 0:
            raise ValidationError("no samples to evaluate")
        for j, name in enumerate(task.output_names):
            report.regression.append(regression_metrics(name, predictions[:, j], targets[:, j]))
    return report


def selection_score(task, predictions, targets) -> float:
    """Scalar for model selection; higher is better, ``-inf`` when undefined."""
    task = get_task(task)
    report = evaluate(task, predictions, targets)
    if task.is_classification:
        return -math.inf if report.macro_auroc is None else report.macro_auroc
    return -report.macro_mae
