"""Depth-l node embeddings: SGC propagation and a ReLU GCN trained by hand-written backprop."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifier import MlpClassifier
from .graph_core import Graph, SparseMatrix, Split, build_normalized_adjacency
from .nn import Adam, TrainingDivergence, glorot_uniform, relu, softmax_cross_entropy

CHECKPOINT_FORMAT = "transot-weights/1"
ENCODERS = ("sgc", "gcn", "raw")


@dataclass(frozen=True)
class Embeddings:
    z: np.ndarray
    depth: int
    encoder: str

    def __post_init__(self):
        if self.encoder not in ENCODERS:
            raise ValueError(f"unknown encoder tag {self.encoder!r}")
        if not np.all(np.isfinite(self.z)):
            raise ValueError("embeddings contain non-finite entries")


@dataclass
class GcnModel:
    """Bias-free GCN layers ``X <- ReLU(A X W)``."""

    weights: list

    @property
    def layers(self) -> int:
        return len(self.weights)

    @property
    def hidden(self) -> int:
        return self.weights[0].shape[1]


def _check_dims(adj: SparseMatrix, x: np.ndarray):
    if x.ndim != 2 or x.shape[0] != adj.n:
        raise ValueError(f"dimension mismatch: adjacency is {adj.n}x{adj.n}, features are {x.shape}")


def sgc_embed(adj: SparseMatrix, x, depth: int) -> Embeddings:
    """``A^depth X`` by repeated sparse-dense products."""
    x = np.asarray(x, dtype=np.float64)
    _check_dims(adj, x)
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    z = x.copy()
    for _ in range(depth):
        z = adj.matrix @ z
    return Embeddings(z, depth, "sgc")


def gcn_forward(adj: SparseMatrix, x, model: GcnModel) -> list:
    """Outputs ``X^(0), ..., X^(L)`` of every layer."""
    h = np.asarray(x, dtype=np.float64)
    _check_dims(adj, h)
    out = [Embeddings(h, 0, "raw")]
    for t, w in enumerate(model.weights):
        if w.shape[0] != h.shape[1]:
            raise ValueError(f"dimension mismatch at layer {t}: {h.shape[1]} features vs weight {w.shape}")
        h = relu(adj.matrix @ (h @ w))
        out.append(Embeddings(h, t + 1, "gcn"))
    return out


def init_gcn(in_dim: int, layers: int, hidden: int, num_classes: int, seed: int):
    """Glorot-uniform GCN weights plus the auxiliary linear readout."""
    if layers < 1 or hidden < 1:
        raise ValueError("layers and hidden must be positive")
    rng = np.random.default_rng(seed)
    dims = [in_dim] + [hidden] * layers
    weights = [glorot_uniform(rng, dims[t], dims[t + 1]) for t in range(layers)]
    readout = glorot_uniform(rng, hidden, num_classes)
    return GcnModel(weights), readout


def gcn_loss_and_grad(adj: SparseMatrix, x: np.ndarray, model: GcnModel, readout: np.ndarray, labels, train_idx):
    """Cross-entropy of the readout on the training rows, with gradients.

    Returns ``(loss, weight_grads, readout_grad)``.
    """
    a = adj.matrix
    hs = [x]
    aggs = []
    pres = []
    h = x
    for w in model.weights:
        ah = a @ h
        p = ah @ w
        aggs.append(ah)
        pres.append(p)
        h = relu(p)
        hs.append(h)
    scores = h[train_idx] @ readout
    loss, d_scores = softmax_cross_entropy(scores, labels[train_idx])
    d_readout = h[train_idx].T @ d_scores
    dh = np.zeros_like(h)
    dh[train_idx] = d_scores @ readout.T
    grads = [None] * model.layers
    for t in range(model.layers - 1, -1, -1):
        dp = dh * (pres[t] > 0)
        grads[t] = aggs[t].T @ dp
        if t > 0:
            dh = a.T @ (dp @ model.weights[t].T)
    return loss, grads, d_readout


def train_gcn(
    g: Graph,
    split: Split,
    layers: int,
    hidden: int = 64,
    epochs: int = 500,
    lr: float = 0.01,
    seed: int = 0,
    adj: SparseMatrix | None = None,
    return_history: bool = False,
):
    """Train a GCN end to end through a discarded linear softmax readout.

    Only training-node labels enter the loss. Full-batch Adam, no weight
    decay, no dropout.
    """
    if g.num_nodes != split.n:
        raise ValueError("split does not match the graph")
    adj = adj if adj is not None else build_normalized_adjacency(g)
    model, readout = init_gcn(g.num_features, layers, hidden, g.num_classes, seed)
    params = model.weights + [readout]
    opt = Adam(params, lr=lr)
    history = []
    for epoch in range(epochs):
        loss, grads, d_readout = gcn_loss_and_grad(adj, g.features, model, readout, g.labels, split.train)
        if not np.isfinite(loss):
            raise TrainingDivergence(epoch, loss)
        history.append(loss)
        opt.step(params, grads + [d_readout])
    if return_history:
        if epochs:
            history.append(gcn_loss_and_grad(adj, g.features, model, readout, g.labels, split.train)[0])
        return model, history
    return model


def weight_spectral_norm(w, iters: int = 10_000, tol: float = 1e-12) -> float:
    """Largest singular value via power iteration on ``W^T W``."""
    w = np.asarray(w, dtype=np.float64)
    if not np.any(w):
        return 0.0
    gram = w.T @ w
    v = np.random.default_rng(0).standard_normal(gram.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        nv = gram @ v
        new_lam = float(v @ nv)
        norm = np.linalg.norm(nv)
        if norm == 0.0:
            return 0.0
        v = nv / norm
        if abs(new_lam - lam) <= tol * abs(new_lam):
            lam = new_lam
            break
        lam = new_lam
    return float(np.sqrt(max(lam, 0.0)))


def max_spectral_norm(model: GcnModel) -> float:
    return max(weight_spectral_norm(w) for w in model.weights)


def save_checkpoint(model, path) -> None:
    """Write GCN or MLP weights as JSON: layer shapes plus row-major values."""
    if isinstance(model, GcnModel):
        record = {"format": CHECKPOINT_FORMAT, "kind": "gcn", "weights": [_pack(w) for w in model.weights]}
    elif isinstance(model, MlpClassifier):
        record = {
            "format": CHECKPOINT_FORMAT,
            "kind": "mlp",
            "weights": [_pack(w) for w in model.weights],
            "biases": [_pack(b[None, :]) for b in model.biases],
        }
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    Path(path).write_text(json.dumps(record))


def load_checkpoint(path):
    record = json.loads(Path(path).read_text())
    if record.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unsupported checkpoint format {record.get('format')!r}")
    weights = [_unpack(r) for r in record["weights"]]
    if record["kind"] == "gcn":
        return GcnModel(weights)
    if record["kind"] == "mlp":
        return MlpClassifier(weights, [_unpack(r)[0] for r in record["biases"]])
    raise ValueError(f"{path}: unknown model kind {record['kind']!r}")


def _pack(arr):
    return {"shape": list(arr.shape), "values": [float(v) for v in arr.ravel()]}


def _unpack(rec):
    return np.array(rec["values"], dtype=np.float64).reshape(rec["shape"])


def encode(g: Graph, split: Split, kind: str, depth: int, adj: SparseMatrix | None = None,
           hidden: int = 64, epochs: int = 500, lr: float = 0.01, seed: int = 0):
    """Embeddings of every node at ``depth``; returns ``(embeddings, gcn_model_or_None)``.

    ``gcn`` trains a fresh ``depth``-layer model on ``split`` and returns its
    last layer; ``raw`` ignores ``depth``.
    """
    adj = adj if adj is not None else build_normalized_adjacency(g)
    if kind == "raw":
        return Embeddings(np.array(g.features), 0, "raw"), None
    if kind == "sgc":
        return sgc_embed(adj, g.features, depth), None
    if kind == "gcn":
        if depth < 1:
            raise ValueError("a GCN needs at least one layer")
        model = train_gcn(g, split, depth, hidden, epochs, lr, seed, adj=adj)
        return gcn_forward(adj, g.features, model)[-1], model
    raise ValueError(f"unknown encoder {kind!r}")
