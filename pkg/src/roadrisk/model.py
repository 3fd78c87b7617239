"""Logistic risk classifier: training, metrics, and the model bundle format.

Training is seeded mini-batch gradient descent over standardized features,
written so the same seed and data give a bit-identical bundle on every run.
AUROC uses the Mann-Whitney midrank formulation; average precision walks the
descending-score order with ties broken by stable input position.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_X_y

from .common import DetRng, RoadRiskError, sha256_bytes

FORMAT_VERSION = "rrm-model-v1"


class ModelError(RoadRiskError):
    code = "MODEL_INVALID"


class ModelMissingError(RoadRiskError):
    code = "MODEL_MISSING"


class BundleCorruptError(RoadRiskError):
    code = "BUNDLE_CORRUPT"


class BundleVersionError(RoadRiskError):
    code = "BUNDLE_VERSION"


@dataclass(frozen=True)
class Metrics:
    auroc: float
    average_precision: float
    n_pos: int
    n_neg: int

    def to_json(self):
        return {"auroc": self.auroc, "average_precision": self.average_precision,
                "n_pos": self.n_pos, "n_neg": self.n_neg}


@dataclass
class TrainConfig:
    lr: float = 0.05
    epochs: int = 30
    batch: int = 1024
    l2_lambda: float = 1e-4
    seed: int = 42


@dataclass
class ModelBundle:
    feature_names: list
    weights: list
    bias: float
    means: list
    stds: list
    meta: dict = field(default_factory=dict)
    metrics: Metrics | None = None


def standardize_fit(rows):
    """Per-feature mean and population std; constant features get std 1."""
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ModelError("need at least one training row")
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    stds = np.where(stds == 0.0, 1.0, stds)
    return means, stds


def standardize_apply(row, means, stds):
    return (np.asarray(row, dtype=np.float64) - means) / stds


def sigmoid(z):
    """Numerically stable: exp(-logaddexp(0, -z))."""
    return np.exp(-np.logaddexp(0.0, -np.asarray(z, dtype=np.float64)))


def loss_and_grad(w, b, X, y, l2_lambda):
    """Mean log-loss plus (lambda/2)*||w||^2, with analytic gradients.

    Per-example loss is logaddexp(0, z) - y*z, which equals the cross
    entropy of sigmoid(z) without ever forming an unstable log(p).
    """
    z = X @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z)
                 + 0.5 * l2_lambda * float(w @ w))
    p = sigmoid(z)
    residual = p - y
    grad_w = X.T @ residual / X.shape[0] + l2_lambda * w
    grad_b = float(np.mean(residual))
    return loss, grad_w, grad_b


class RiskClassifier(BaseEstimator):
    """Logistic regression trained by seeded mini-batch gradient descent.

    Follows the usual estimator conventions: hyperparameters in __init__,
    fitted state in trailing-underscore attributes, get_params for free.
    """

    def __init__(self, lr=0.05, epochs=30, batch=1024, l2_lambda=1e-4, seed=42):
        self.lr = lr
        self.epochs = epochs
        self.batch = batch
        self.l2_lambda = l2_lambda
        self.seed = seed

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        classes = set(np.unique(y))
        if not classes <= {0.0, 1.0}:
            raise ModelError(f"labels must be 0/1, got {sorted(classes)}")
        if len(classes) < 2:
            raise ModelError("training data has a single class")
        self.means_, self.stds_ = standardize_fit(X)
        Xs = (X - self.means_) / self.stds_
        n, d = Xs.shape
        w = np.zeros(d, dtype=np.float64)
        b = 0.0
        rng = DetRng(self.seed)
        losses = []
        indices = list(range(n))
        batch = max(1, int(self.batch))
        for _ in range(self.epochs):
            rng.shuffle(indices)
            order = np.array(indices, dtype=np.int64)
            for start in range(0, n, batch):
                sel = order[start:start + batch]
                Xb = Xs[sel]
                yb = y[sel]
                _, grad_w, grad_b = loss_and_grad(w, b, Xb, yb, self.l2_lambda)
                w = w - self.lr * grad_w
                b = b - self.lr * grad_b
            loss, _, _ = loss_and_grad(w, b, Xs, y, self.l2_lambda)
            losses.append(loss)
        self.weights_ = w
        self.bias_ = b
        self.epoch_losses_ = losses
        return self

    def decision_function(self, X):
        X = check_array(X, dtype=np.float64)
        Xs = (X - self.means_) / self.stds_
        return Xs @ self.weights_ + self.bias_

    def predict_proba(self, X):
        p = sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)


def train_logistic(rows, labels, feature_names, config: TrainConfig | None = None,
                   meta: dict | None = None) -> ModelBundle:
    """Fit the classifier and package it as a ModelBundle."""
    config = config or TrainConfig()
    X = np.asarray(rows, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(feature_names):
        raise ModelError(f"rows must be n x {len(feature_names)}")
    if config.epochs == 0:
        means, stds = standardize_fit(X)
        clf_weights = np.zeros(len(feature_names))
        bundle_meta = dict(meta or {})
        bundle_meta.update(seed=config.seed, epoch_losses=[])
        return ModelBundle(list(feature_names), clf_weights.tolist(), 0.0,
                           means.tolist(), stds.tolist(), bundle_meta)
    clf = RiskClassifier(lr=config.lr, epochs=config.epochs, batch=config.batch,
                         l2_lambda=config.l2_lambda, seed=config.seed)
    clf.fit(X, y)
    bundle_meta = dict(meta or {})
    bundle_meta.update(seed=config.seed, epoch_losses=clf.epoch_losses_)
    return ModelBundle(list(feature_names), clf.weights_.tolist(), float(clf.bias_),
                       clf.means_.tolist(), clf.stds_.tolist(), bundle_meta)


def _bundle_arrays(bundle: ModelBundle):
    w = np.asarray(bundle.weights, dtype=np.float64)
    means = np.asarray(bundle.means, dtype=np.float64)
    stds = np.asarray(bundle.stds, dtype=np.float64)
    return w, means, stds


def predict_proba(bundle: ModelBundle, row) -> float:
    """Probability for one raw feature row."""
    row = np.asarray(row, dtype=np.float64)
    if row.shape != (len(bundle.feature_names),):
        raise ModelError(
            f"feature row has {row.shape[0] if row.ndim == 1 else 'bad'} values, "
            f"expected {len(bundle.feature_names)}: {bundle.feature_names}")
    w, means, stds = _bundle_arrays(bundle)
    z = float((row - means) / stds @ w + bundle.bias)
    return float(sigmoid(z))


def predict_proba_many(bundle: ModelBundle, rows) -> np.ndarray:
    """Vectorized scoring for overlay and forecast generation."""
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(bundle.feature_names):
        raise ModelError(f"rows must be n x {len(bundle.feature_names)}: "
                         f"{bundle.feature_names}")
    w, means, stds = _bundle_arrays(bundle)
    return sigmoid((X - means) / stds @ w + bundle.bias)


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC with midrank tie handling."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ModelError("auroc needs both classes")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        # midrank over the tie run, 1-based
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    rank_sum = float(np.sum(ranks[labels == 1]))
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def average_precision(scores, labels) -> float:
    """Mean precision at each positive, descending scores, stable input order."""
    scores = list(scores)
    labels = list(labels)
    n_pos = sum(1 for y in labels if y == 1)
    if n_pos == 0:
        raise ModelError("average_precision needs at least one positive")
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits = 0
    total = 0.0
    for rank, i in enumerate(order, start=1):
        if labels[i] == 1:
            hits += 1
            total += hits / rank
    return total / n_pos


def evaluate(bundle: ModelBundle, rows, labels) -> Metrics:
    p = predict_proba_many(bundle, rows)
    labels = np.asarray(labels)
    return Metrics(
        auroc=auroc(p, labels),
        average_precision=average_precision(p.tolist(), labels.tolist()),
        n_pos=int(np.sum(labels == 1)),
        n_neg=int(np.sum(labels == 0)),
    )


def bundle_doc(bundle: ModelBundle) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "feature_names": list(bundle.feature_names),
        "weights": list(bundle.weights),
        "bias": bundle.bias,
        "means": list(bundle.means),
        "stds": list(bundle.stds),
        "meta": bundle.meta,
        "metrics": bundle.metrics.to_json() if bundle.metrics else None,
    }


def bundle_bytes(bundle: ModelBundle) -> bytes:
    """Exactly the bytes save_bundle writes, for digesting without a file."""
    text = json.dumps(bundle_doc(bundle), sort_keys=True, indent=1)
    return (text + "\n").encode("utf-8")


def bundle_digest(bundle: ModelBundle) -> str:
    return sha256_bytes(bundle_bytes(bundle))


def save_bundle(bundle: ModelBundle, path):
    with open(path, "wb") as fh:
        fh.write(bundle_bytes(bundle))


def load_bundle(path) -> ModelBundle:
    if not os.path.exists(path):
        raise ModelMissingError(f"model file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise BundleCorruptError(f"{path}: unreadable model bundle: {e}") from e
    if not isinstance(doc, dict):
        raise BundleCorruptError(f"{path}: model bundle is not an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise BundleVersionError(f"{path}: format {version!r}, expected {FORMAT_VERSION!r}")
    try:
        names = list(doc["feature_names"])
        weights = [float(v) for v in doc["weights"]]
        bias = float(doc["bias"])
        means = [float(v) for v in doc["means"]]
        stds = [float(v) for v in doc["stds"]]
        meta = dict(doc.get("meta") or {})
        raw_metrics = doc.get("metrics")
    except (KeyError, TypeError, ValueError) as e:
        raise BundleCorruptError(f"{path}: malformed model bundle: {e}") from e
    d = len(names)
    if not (len(weights) == len(means) == len(stds) == d):
        raise BundleCorruptError(f"{path}: vector lengths disagree with {d} features")
    values = weights + means + stds + [bias]
    if not all(math.isfinite(v) for v in values):
        raise BundleCorruptError(f"{path}: non-finite model values")
    if any(s <= 0 for s in stds):
        raise BundleCorruptError(f"{path}: non-positive std")
    metrics = None
    if raw_metrics is not None:
        try:
            metrics = Metrics(float(raw_metrics["auroc"]),
                              float(raw_metrics["average_precision"]),
                              int(raw_metrics["n_pos"]), int(raw_metrics["n_neg"]))
        except (KeyError, TypeError, ValueError) as e:
            raise BundleCorruptError(f"{path}: malformed metrics: {e}") from e
        if not (0.0 <= metrics.auroc <= 1.0 and 0.0 <= metrics.average_precision <= 1.0):
            raise BundleCorruptError(f"{path}: metrics out of range")
        if metrics.n_pos < 0 or metrics.n_neg < 0:
            raise BundleCorruptError(f"{path}: negative class counts")
    return ModelBundle(names, weights, bias, means, stds, meta, metrics)
