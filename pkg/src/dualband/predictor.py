"""Blockage predictors over windowed samples.

Every predictor follows the scikit-learn estimator protocol with *sequences
of* :class:`~dualband.dataset.WindowedSample` as ``X``: ``fit(samples)``,
``predict_proba(samples)`` returning ``(n, 2)``, ``predict(samples)``.
The learned predictor is an ordinary :class:`sklearn.pipeline.Pipeline`:
:class:`WindowFeaturizer`, a ``StandardScaler`` and :class:`LogisticRegressionGD`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.pipeline import Pipeline
from sklearn.preprocessing import StandardScaler
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .dataset import SplitDataset, labels_of
from .errors import ConfigurationError, TrainingError
from .scene import NUM_BEAMS, los_column

FRAME_STATS = 4
STEP_FEATURES = NUM_BEAMS + FRAME_STATS
_STD_FLOOR = 1e-6


# -- features ---------------------------------------------------------------

def frame_statistics(frame) -> np.ndarray:
    """Mean, variance, LOS-column mean and darkest 8x8-block mean of a frame."""
    f = np.asarray(frame, dtype=float)
    h, w, _ = f.shape
    los = f[:, los_column(w), :].mean()
    bh, bw = h // 8, w // 8
    blocks = f[: bh * 8, : bw * 8].reshape(bh, 8, bw, 8, -1).mean(axis=(1, 3, 4))
    return np.array([f.mean(), f.var(), los, blocks.min()])


def extract_features(sample, power_mean=None, power_std=None) -> np.ndarray:
    """Flat feature vector of length ``r * 68``.

    Per step: 64 beam powers, z-scored when training statistics are given,
    then the four :func:`frame_statistics`.
    """
    powers = np.asarray(sample.powers, dtype=float)
    if power_mean is not None:
        powers = (powers - power_mean) / power_std
    stats = np.stack([frame_statistics(f) for f in sample.frames])
    return np.concatenate([powers, stats], axis=1).reshape(-1)


class WindowFeaturizer(TransformerMixin, BaseEstimator):
    """Samples -> feature matrix; ``fit`` learns per-beam power mean and std."""

    def fit(self, samples, y=None):
        if len(samples) == 0:
            raise TrainingError("no samples to fit features on")
        powers = np.concatenate([np.asarray(s.powers, dtype=float) for s in samples])
        self.power_mean_ = powers.mean(axis=0)
        self.power_std_ = np.maximum(powers.std(axis=0), _STD_FLOOR)
        self.window_ = samples[0].window
        self.n_features_out_ = self.window_ * STEP_FEATURES
        return self

    def transform(self, samples):
        check_is_fitted(self, "power_mean_")
        for s in samples:
            if s.window != self.window_:
                raise ConfigurationError(
                    f"sample window {s.window} != fitted window {self.window_}", key="dataset.r"
                )
        if len(samples) == 0:
            return np.empty((0, self.n_features_out_))
        return np.stack([extract_features(s, self.power_mean_, self.power_std_) for s in samples])


# -- logistic regression ----------------------------------------------------

def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def cross_entropy(weights, bias, X, y) -> float:
    """Mean negative log-likelihood of labels ``y`` under the logistic model."""
    z = X @ weights + bias
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def cross_entropy_grad(weights, bias, X, y):
    """Gradient of :func:`cross_entropy` with respect to ``(weights, bias)``."""
    err = sigmoid(X @ weights + bias) - y
    return X.T @ err / len(y), float(err.mean())


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float = 0.0
    threshold: float = 0.5
    loss_curve: list = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if not 0.0 < self.threshold < 1.0:
            raise ConfigurationError("threshold must lie in (0, 1)", key="predictor.threshold")

    @property
    def feature_len(self) -> int:
        return self.weights.size

    def proba(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.feature_len:
            raise ConfigurationError(
                f"feature length {X.shape[1]} != model length {self.feature_len}", key="predictor"
            )
        return sigmoid(X @ self.weights + self.bias)

    def decide(self, proba) -> np.ndarray:
        # ties predict blockage
        return (np.asarray(proba) >= self.threshold).astype(np.int64)

    def to_text(self) -> str:
        lines = [
            f"feature_len={self.feature_len}",
            f"threshold={self.threshold!r}",
            f"bias={float(self.bias)!r}",
            "weights=" + ",".join(repr(float(w)) for w in self.weights),
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "LogisticModel":
        fields = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigurationError(f"line {lineno}: expected key=value", key=line)
            fields[key.strip()] = value.strip()
        try:
            n = int(fields["feature_len"])
            weights = [float(v) for v in fields["weights"].split(",")] if n else []
            model = cls(weights=np.array(weights), bias=float(fields["bias"]),
                        threshold=float(fields["threshold"]))
        except KeyError as exc:
            raise ConfigurationError(f"model file missing {exc.args[0]}", key=exc.args[0]) from None
        except ValueError as exc:
            raise ConfigurationError(f"model file: {exc}", key="weights") from None
        if model.feature_len != n:
            raise ConfigurationError(f"feature_len={n} but {model.feature_len} weights", key="weights")
        return model


class LogisticRegressionGD(ClassifierMixin, BaseEstimator):
    """Binary logistic regression by full-batch gradient descent on mean
    cross-entropy, starting from zero weights.

    ``loss_curve_[k]`` is the training loss after ``k`` steps, so it has
    ``epochs + 1`` entries.
    """

    def __init__(self, epochs=2000, learning_rate=0.1, threshold=0.5):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.threshold = threshold

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        y = y.astype(float)
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise TrainingError("labels must be 0 or 1")
        if np.unique(y).size < 2:
            raise TrainingError("training set holds a single class")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0", key="predictor.epochs")
        w = np.zeros(X.shape[1])
        b = 0.0
        curve = [cross_entropy(w, b, X, y)]
        for _ in range(self.epochs):
            gw, gb = cross_entropy_grad(w, b, X, y)
            w = w - self.learning_rate * gw
            b = b - self.learning_rate * gb
            curve.append(cross_entropy(w, b, X, y))
        self.classes_ = np.array([0, 1])
        self.model_ = LogisticModel(weights=w, bias=b, threshold=self.threshold, loss_curve=curve)
        self.loss_curve_ = curve
        self.n_features_in_ = X.shape[1]
        return self

    @classmethod
    def from_model(cls, model: LogisticModel) -> "LogisticRegressionGD":
        est = cls(epochs=0, threshold=model.threshold)
        est.classes_ = np.array([0, 1])
        est.model_ = model
        est.loss_curve_ = list(model.loss_curve)
        est.n_features_in_ = model.feature_len
        return est

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        return X @ self.model_.weights + self.model_.bias

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        p = self.model_.proba(check_array(X, dtype=float))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return self.model_.decide(self.predict_proba(X)[:, 1])


def make_logistic_predictor(epochs=2000, learning_rate=0.1, threshold=0.5) -> Pipeline:
    return Pipeline([
        ("features", WindowFeaturizer()),
        ("scale", StandardScaler()),
        ("logistic", LogisticRegressionGD(epochs=epochs, learning_rate=learning_rate, threshold=threshold)),
    ])


def train_logistic(dataset: SplitDataset, epochs=2000, learning_rate=0.1, threshold=0.5) -> Pipeline:
    """Fit the feature + logistic pipeline on ``dataset.train``.

    The fitted :class:`LogisticModel` is ``pipe[-1].model_``.
    """
    train = list(dataset.train)
    if not train:
        raise TrainingError("empty training split")
    pipe = make_logistic_predictor(epochs, learning_rate, threshold)
    return pipe.fit(train, labels_of(train))


# -- reference predictors ---------------------------------------------------

class _SamplePredictor(ClassifierMixin, BaseEstimator):
    """Base for predictors that read ground truth from the samples."""

    #: whether predictions depend on frames/powers (False: no decode needed)
    uses_observations = False

    def fit(self, samples=None, y=None):
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, samples):
        p = self._positive_proba(samples)
        return np.column_stack([1.0 - p, p])

    def predict(self, samples):
        return (self.predict_proba(samples)[:, 1] >= 0.5).astype(np.int64)


class OraclePredictor(_SamplePredictor):
    """Returns the true label."""

    def _positive_proba(self, samples):
        return labels_of(samples).astype(float)


class ConfusionPredictor(_SamplePredictor):
    """Flips the true label of positives with probability ``1 - tpr`` and of
    negatives with probability ``1 - tnr``.

    Each call draws one uniform per sample, in order, from a fresh generator
    seeded with ``seed``, so repeated calls agree.
    """

    def __init__(self, tpr=0.9278, tnr=0.9278, seed=0):
        self.tpr = tpr
        self.tnr = tnr
        self.seed = seed

    def _positive_proba(self, samples):
        for name in ("tpr", "tnr"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]", key=f"confusion.{name}")
        y = labels_of(samples)
        u = np.random.default_rng(self.seed).random(len(y))
        keep = np.where(y == 1, u < self.tpr, u < self.tnr)
        return np.where(keep, y, 1 - y).astype(float)


class ConstantPredictor(_SamplePredictor):
    def __init__(self, value=0):
        self.value = value

    def _positive_proba(self, samples):
        return np.full(len(samples), float(self.value))


def uses_observations(predictor) -> bool:
    return getattr(predictor, "uses_observations", True)


def predict(predictor, samples) -> tuple[np.ndarray, np.ndarray]:
    """``(probability of blockage, decision)`` for each sample."""
    samples = list(samples)
    if not samples:
        return np.empty(0), np.empty(0, dtype=np.int64)
    proba = predictor.predict_proba(samples)[:, 1]
    return proba, np.asarray(predictor.predict(samples), dtype=np.int64)


@dataclass(frozen=True)
class EvalMetrics:
    accuracy: float
    tpr: float
    tnr: float
    cross_entropy: float
    n: int


def evaluate(predictor, samples) -> EvalMetrics:
    samples = list(samples)
    if not samples:
        raise ConfigurationError("cannot evaluate on zero samples", key="samples")
    y = labels_of(samples)
    proba, decision = predict(predictor, samples)
    pos, neg = y == 1, y == 0
    p = np.clip(proba, 1e-12, 1.0 - 1e-12)
    ce = float(-np.mean(y * np.log(p) + (1 - y) * np.log(1.0 - p)))
    return EvalMetrics(
        accuracy=float(np.mean(decision == y)),
        tpr=float(np.mean(decision[pos] == 1)) if pos.any() else math.nan,
        tnr=float(np.mean(decision[neg] == 0)) if neg.any() else math.nan,
        cross_entropy=ce,
        n=len(y),
    )
