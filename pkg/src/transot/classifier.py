"""MLP margin classifier, margins, and the empirical losses used by the bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import Adam, TrainingDivergence, glorot_uniform, relu, softmax_cross_entropy

ALLOWED_LAYERS = (1, 2, 4)
GAMMA_FLOOR = 1e-6


def quantile_index(n: int, q: float) -> int:
    """Index into an ascending sort for the pinned lower quantile rule.

    The rule is ``ceil(q * n) - 1``; ``q * n`` is rounded to 9 decimals
    first so that e.g. ``0.9 * 10`` does not land on the next order statistic.
    """
    if n < 1:
        raise ValueError("quantile of an empty sample")
    if not 0.0 < q <= 1.0:
        raise ValueError("quantile level must lie in (0, 1]")
    return min(max(math.ceil(round(q * n, 9)), 1), n) - 1


def lower_quantile(values, q: float) -> float:
    values = np.asarray(values, dtype=np.float64).ravel()
    k = quantile_index(values.size, q)
    if k == values.size - 1:
        return float(values.max())
    return float(np.partition(values, k)[k])


@dataclass
class MlpClassifier:
    """Affine layers with ReLU in between (none after the last)."""

    weights: list
    biases: list

    @property
    def layers(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[1]

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def scores(self, z) -> np.ndarray:
        h = np.asarray(z, dtype=np.float64)
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k + 1 < self.layers:
                h = relu(h)
        return h

    def predict(self, z) -> np.ndarray:
        return self.scores(z).argmax(axis=1)

    def scaled(self, lam: float) -> MlpClassifier:
        """Classifier whose scores are ``lam`` times this one's."""
        weights = [w.copy() for w in self.weights]
        biases = [b.copy() for b in self.biases]
        weights[-1] *= lam
        biases[-1] *= lam
        return MlpClassifier(weights, biases)


def init_classifier(input_dim: int, num_classes: int, layers: int, hidden: int, seed: int) -> MlpClassifier:
    if layers not in ALLOWED_LAYERS:
        raise ValueError(f"layers must be one of {ALLOWED_LAYERS}")
    rng = np.random.default_rng(seed)
    dims = [input_dim] + [hidden] * (layers - 1) + [num_classes]
    weights = [glorot_uniform(rng, dims[k], dims[k + 1]) for k in range(layers)]
    biases = [np.zeros(dims[k + 1]) for k in range(layers)]
    return MlpClassifier(weights, biases)


def mlp_loss_and_grad(clf: MlpClassifier, z: np.ndarray, y: np.ndarray):
    """Mean cross-entropy on ``(z, y)`` and gradients as ``[dW0, db0, dW1, ...]``."""
    acts = [z]
    pre = []
    h = z
    for k, (w, b) in enumerate(zip(clf.weights, clf.biases)):
        a = h @ w + b
        pre.append(a)
        h = relu(a) if k + 1 < clf.layers else a
        acts.append(h)
    loss, delta = softmax_cross_entropy(h, y)
    grads = [None] * (2 * clf.layers)
    for k in range(clf.layers - 1, -1, -1):
        grads[2 * k] = acts[k].T @ delta
        grads[2 * k + 1] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ clf.weights[k].T) * (pre[k - 1] > 0)
    return loss, grads


def train_classifier(
    z_train,
    y_train,
    layers: int = 2,
    hidden: int = 64,
    epochs: int = 500,
    lr: float = 0.01,
    seed: int = 0,
    num_classes: int | None = None,
) -> MlpClassifier:
    """Full-batch Adam on softmax cross-entropy; deterministic for a fixed seed."""
    z = np.asarray(z_train, dtype=np.float64)
    y = np.asarray(y_train, dtype=np.int64)
    k = int(num_classes if num_classes is not None else y.max() + 1)
    if z.shape[0] != y.size:
        raise ValueError("z_train and y_train disagree in length")
    if z.shape[0] < k:
        raise ValueError(f"need at least {k} training rows, got {z.shape[0]}")
    if y.min() < 0 or y.max() >= k:
        raise ValueError("label out of range")
    clf = init_classifier(z.shape[1], k, layers, hidden, seed)
    params = clf.params()
    opt = Adam(params, lr=lr)
    for epoch in range(epochs):
        loss, grads = mlp_loss_and_grad(clf, z, y)
        if not np.isfinite(loss):
            raise TrainingDivergence(epoch, loss)
        opt.step(params, grads)
    return clf


def margin_matrix(scores: np.ndarray) -> np.ndarray:
    """Margins of every node under every candidate label, shape ``(N, K)``."""
    scores = np.asarray(scores, dtype=np.float64)
    n, k = scores.shape
    if k < 2:
        raise ValueError("margin is undefined for a single class")
    top = scores.argmax(axis=1)
    first = scores[np.arange(n), top]
    rest = scores.copy()
    rest[np.arange(n), top] = -np.inf
    second = rest.max(axis=1)
    best_other = np.repeat(first[:, None], k, axis=1)
    best_other[np.arange(n), top] = second
    return scores - best_other


@dataclass(frozen=True)
class MarginTable:
    scores: np.ndarray
    labels: np.ndarray
    margins: np.ndarray

    def all_labels(self) -> np.ndarray:
        return margin_matrix(self.scores)


def margins_from_scores(scores, labels) -> MarginTable:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (scores.shape[0],):
        raise ValueError("one label per node is required")
    if labels.min() < 0 or labels.max() >= scores.shape[1]:
        raise ValueError("label out of range")
    rho = margin_matrix(scores)[np.arange(labels.size), labels]
    return MarginTable(scores, labels, rho)


def margins(f: MlpClassifier, z, labels_for_margin) -> MarginTable:
    """Margin of each node under the supplied (possibly hypothetical) label."""
    return margins_from_scores(f.scores(z), labels_for_margin)


def zero_one_test_loss(table: MarginTable, split) -> float:
    return float(np.mean(table.margins[split.test] <= 0.0))


def zero_one_train_loss(table: MarginTable, split) -> float:
    return float(np.mean(table.margins[split.train] <= 0.0))


def margin_train_loss(table: MarginTable, split, gamma: float) -> float:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return float(np.mean(table.margins[split.train] <= gamma))


def select_gamma(table: MarginTable, split, quantile: float = 0.5) -> float:
    """Lower ``quantile`` of the positive training margins, floored at 1e-6."""
    if not 0.0 < quantile < 1.0:
        raise ValueError("quantile must lie in (0, 1)")
    train = table.margins[split.train]
    pos = train[train > 0]
    if pos.size == 0:
        raise ValueError("no positive training margins to select gamma from")
    return max(lower_quantile(pos, quantile), GAMMA_FLOOR)
