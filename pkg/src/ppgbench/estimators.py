"""scikit-learn compatible estimators around the LeNet1D trainer."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .errors import ValidationError
from .metrics import median_baseline
from .neural.model import lenet1d_architecture
from .neural.train import TrainConfig, predict, predict_raw, train
from .tasks import get_task
from .validation import check_signals, check_targets


def _check_input(X):
    """2-D array for equal-length input; a list of 1-D arrays otherwise."""
    if isinstance(X, np.ndarray) or (len(X) and np.ndim(X[0]) == 1 and
                                     len({len(r) for r in X}) == 1):
        return check_signals(X)
    rows = [np.asarray(r, dtype=np.float64).ravel() for r in X]
    if not rows:
        raise ValidationError("no segments given")
    for r in rows:
        if not np.all(np.isfinite(r)):
            raise ValidationError("segments contain non-finite values")
    return rows


class _LeNet1DBase(BaseEstimator):
    def __init__(self, task="AF", learning_rate=1e-3, epochs=50, effective_batch=512,
                 micro_batch=64, weight_decay=0.01, betas=(0.9, 0.999), epsilon=1e-8,
                 random_state=0, conv_channels=(16, 32), kernel_size=7, pool_size=4, hidden=64):
        self.task = task
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.effective_batch = effective_batch
        self.micro_batch = micro_batch
        self.weight_decay = weight_decay
        self.betas = betas
        self.epsilon = epsilon
        self.random_state = random_state
        self.conv_channels = conv_channels
        self.kernel_size = kernel_size
        self.pool_size = pool_size
        self.hidden = hidden

    def _config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate, epochs=self.epochs,
            effective_batch=self.effective_batch, micro_batch=self.micro_batch,
            weight_decay=self.weight_decay, betas=self.betas, epsilon=self.epsilon,
            seed=int(self.random_state or 0),
        )

    def fit(self, X, y, validation_data=None):
        """Train; the epoch with the best score on ``validation_data`` is kept.

        Without ``validation_data`` the training set itself is scored.
        """
        task = get_task(self.task)
        X = check_signals(X)
        y = check_targets(y, X.shape[0], task.output_dim)
        if validation_data is None:
            Xv, yv = X, y
        else:
            Xv, yv = validation_data
            Xv = _check_input(Xv)
            yv = check_targets(yv, len(Xv), task.output_dim)
        arch = lenet1d_architecture(
            task.output_dim, conv_channels=self.conv_channels, kernel_size=self.kernel_size,
            pool_size=self.pool_size, hidden=self.hidden,
        )
        self.model_, self.history_ = train(self._config(), task, (X, y), (Xv, yv), arch=arch)
        self.task_ = task
        self.n_outputs_ = task.output_dim
        return self

    def decision_function(self, X):
        """Raw network outputs (logits for classification)."""
        check_is_fitted(self, "model_")
        return predict_raw(self.model_, _check_input(X))


class LeNet1DClassifier(ClassifierMixin, _LeNet1DBase):
    """Multi-label rhythm classifier with independent sigmoid outputs.

    ``y`` is the ``(n_samples, n_labels)`` 0/1 target matrix of the task
    (an all-zero row is a valid "none of these" target).
    """

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return predict(self.model_, _check_input(X), self.task_)

    def predict(self, X, threshold=0.5):
        return (self.predict_proba(X) >= threshold).astype(int)

    def score(self, X, y, sample_weight=None):
        """Macro AUROC over labels with both classes present."""
        from .metrics import evaluate

        report = evaluate(self.task_, self.predict_proba(X), y)
        return report.macro_auroc


class LeNet1DRegressor(RegressorMixin, _LeNet1DBase):
    """Regression head (HR, RR, or joint SBP/DBP); trained on MSE."""

    def __init__(self, task="REG_HR", learning_rate=1e-3, epochs=50, effective_batch=512,
                 micro_batch=64, weight_decay=0.01, betas=(0.9, 0.999), epsilon=1e-8,
                 random_state=0, conv_channels=(16, 32), kernel_size=7, pool_size=4, hidden=64):
        super().__init__(
            task=task, learning_rate=learning_rate, epochs=epochs,
            effective_batch=effective_batch, micro_batch=micro_batch,
            weight_decay=weight_decay, betas=betas, epsilon=epsilon,
            random_state=random_state, conv_channels=conv_channels, kernel_size=kernel_size,
            pool_size=pool_size, hidden=hidden,
        )

    def predict(self, X):
        check_is_fitted(self, "model_")
        out = predict(self.model_, _check_input(X), self.task_)
        return out[:, 0] if out.shape[1] == 1 else out

    def score(self, X, y, sample_weight=None):
        """Negative mean absolute error (higher is better)."""
        pred = np.asarray(self.predict(X)).reshape(len(y), -1)
        return -float(np.mean(np.abs(pred - np.asarray(y, dtype=float).reshape(pred.shape))))


class MedianBaselineRegressor(RegressorMixin, BaseEstimator):
    """Predicts the per-output median of the training targets for every input."""

    def fit(self, X, y):
        y = np.asarray(y, dtype=np.float64)
        y2 = y[:, None] if y.ndim == 1 else y
        if y2.shape[0] == 0:
            raise ValidationError("median baseline needs at least one training target")
        self.medians_ = np.array([median_baseline(y2[:, j]) for j in range(y2.shape[1])])
        self._one_d = y.ndim == 1
        return self

    def predict(self, X):
        check_is_fitted(self, "medians_")
        n = len(X)
        out = np.tile(self.medians_, (n, 1))
        return out[:, 0] if self._one_d else out
