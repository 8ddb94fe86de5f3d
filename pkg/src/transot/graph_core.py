"""Graphs, the normalized aggregation operator, dataset I/O and random splits."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp


class DatasetError(ValueError):
    """Malformed dataset file; the message carries file and line context."""


@dataclass(frozen=True)
class Graph:
    """Undirected, unweighted node-classification graph.

    Edges are stored once per unordered pair as rows ``(u, v)`` with ``u < v``.
    Self-loops are never stored; normalization adds them.
    """

    num_nodes: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        n = self.num_nodes
        if n < 1:
            raise ValueError("num_nodes must be positive")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or x.shape[0] != n:
            raise ValueError(f"features must be {n} x F, got {x.shape}")
        if y.shape != (n,):
            raise ValueError(f"labels must have length {n}, got {y.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("features contain non-finite entries")
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ValueError("label out of range")
        if np.bincount(y, minlength=self.num_classes).min() == 0:
            raise ValueError("every class needs at least one node")
        if edges.size:
            if edges.min() < 0 or edges.max() >= n:
                raise ValueError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("self-loops are not stored")
            edges = np.sort(edges, axis=1)
            edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
            if np.any(np.all(edges[1:] == edges[:-1], axis=1)):
                raise ValueError("duplicate edge")
        for arr in (edges, x, y):
            arr.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    def degrees(self) -> np.ndarray:
        """Plain degrees, without the self-loop."""
        return np.bincount(self.edges.ravel(), minlength=self.num_nodes).astype(np.int64)

    def relabel(self, perm) -> Graph:
        """Return the same graph with node ``i`` renamed to ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        return Graph(
            num_nodes=self.num_nodes,
            edges=perm[self.edges],
            features=self.features[inv],
            labels=self.labels[inv],
            num_classes=self.num_classes,
        )


@dataclass(frozen=True)
class SparseMatrix:
    """Square CSR matrix with a symmetry flag (backed by ``scipy.sparse``)."""

    matrix: sp.csr_matrix
    symmetric: bool = False

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=np.float64)
        if m.shape[0] != m.shape[1]:
            raise ValueError("matrix must be square")
        m.sort_indices()
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def indptr(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def data(self) -> np.ndarray:
        return self.matrix.data

    def __matmul__(self, other):
        return self.matrix @ other

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def is_symmetric(self, tol: float = 0.0) -> bool:
        diff = self.matrix - self.matrix.T
        return diff.nnz == 0 or float(np.abs(diff.data).max()) <= tol


@dataclass(frozen=True)
class Split:
    """Train/test partition of ``range(m + u)``; both index arrays are sorted."""

    train: np.ndarray
    test: np.ndarray
    seed: int | None = None
    m: int = field(init=False)
    u: int = field(init=False)

    def __post_init__(self):
        train = np.sort(np.asarray(self.train, dtype=np.int64))
        test = np.sort(np.asarray(self.test, dtype=np.int64))
        if train.size < 1 or test.size < 1:
            raise ValueError("both sides of a split must be nonempty")
        n = train.size + test.size
        if not np.array_equal(np.sort(np.concatenate([train, test])), np.arange(n)):
            raise ValueError("train and test must partition 0..N-1")
        train.setflags(write=False)
        test.setflags(write=False)
        object.__setattr__(self, "train", train)
        object.__setattr__(self, "test", test)
        object.__setattr__(self, "m", int(train.size))
        object.__setattr__(self, "u", int(test.size))

    @property
    def n(self) -> int:
        return self.m + self.u

    def __eq__(self, other):
        if not isinstance(other, Split):
            return NotImplemented
        return np.array_equal(self.train, other.train) and np.array_equal(self.test, other.test)

    def __hash__(self):
        return hash(self.train.tobytes())


def build_normalized_adjacency(g: Graph) -> SparseMatrix:
    r"""Return :math:`\tilde D^{-1/2}(A + I)\tilde D^{-1/2}` as a symmetric CSR matrix."""
    n = g.num_nodes
    u, v = g.edges[:, 0], g.edges[:, 1]
    loops = np.arange(n)
    rows = np.concatenate([u, v, loops])
    cols = np.concatenate([v, u, loops])
    deg = (g.degrees() + 1).astype(np.float64)
    inv_sqrt = 1.0 / np.sqrt(deg)
    vals = inv_sqrt[rows] * inv_sqrt[cols]
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return SparseMatrix(mat, symmetric=True)


def degree_statistic(g: Graph) -> np.ndarray:
    """Square root of the self-loop-augmented degree, per node."""
    return np.sqrt(g.degrees() + 1.0)


def _resolve(base: Path, name: str) -> Path:
    p = Path(name)
    return p if p.is_absolute() else base / p


def load_graph(manifest_path) -> Graph:
    """Load a graph from a JSON manifest.

    The manifest has keys ``num_nodes``, ``num_classes``, ``edges``,
    ``features`` and ``labels``; the last three are paths relative to the
    manifest's directory. Edge lines are ``u<TAB>v`` with ``u < v``, feature
    rows are comma-separated reals, and labels are one integer per line.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise DatasetError(f"{manifest_path}: missing file")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{manifest_path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    for key in ("num_nodes", "num_classes", "edges", "features", "labels"):
        if key not in manifest:
            raise DatasetError(f"{manifest_path}: missing key {key!r}")
    n = int(manifest["num_nodes"])
    k = int(manifest["num_classes"])
    base = manifest_path.parent
    paths = {key: _resolve(base, manifest[key]) for key in ("edges", "features", "labels")}
    for p in paths.values():
        if not p.exists():
            raise DatasetError(f"{p}: missing file")

    labels = []
    with paths["labels"].open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                lab = int(line)
            except ValueError:
                raise DatasetError(f"{paths['labels']}:{lineno}: not an integer: {line!r}") from None
            if not 0 <= lab < k:
                raise DatasetError(f"{paths['labels']}:{lineno}: label out of range: {lab} not in [0, {k})")
            labels.append(lab)
    if len(labels) != n:
        raise DatasetError(f"{paths['labels']}: shape mismatch: {len(labels)} labels, manifest says {n}")

    rows = []
    width = None
    with paths["features"].open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError:
                raise DatasetError(f"{paths['features']}:{lineno}: unparsable feature row") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DatasetError(
                    f"{paths['features']}:{lineno}: shape mismatch: {len(row)} columns, expected {width}"
                )
            rows.append(row)
    if len(rows) != n:
        raise DatasetError(f"{paths['features']}: shape mismatch: {len(rows)} rows, manifest says {n}")
    if "num_features" in manifest and width != int(manifest["num_features"]):
        raise DatasetError(
            f"{paths['features']}: shape mismatch: {width} columns, manifest says {manifest['num_features']}"
        )
    x = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DatasetError(f"{paths['features']}: non-finite feature value")

    edges = []
    seen = set()
    with paths["edges"].open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DatasetError(f"{paths['edges']}:{lineno}: expected 'u<TAB>v'")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise DatasetError(f"{paths['edges']}:{lineno}: non-integer endpoint") from None
            if not (0 <= a < n and 0 <= b < n):
                raise DatasetError(f"{paths['edges']}:{lineno}: endpoint out of range [0, {n})")
            if a >= b:
                raise DatasetError(f"{paths['edges']}:{lineno}: expected u < v, got {a} {b}")
            if (a, b) in seen:
                raise DatasetError(f"{paths['edges']}:{lineno}: duplicate edge {a} {b}")
            seen.add((a, b))
            edges.append((a, b))
    if "num_edges" in manifest and len(edges) != int(manifest["num_edges"]):
        raise DatasetError(
            f"{paths['edges']}: shape mismatch: {len(edges)} edges, manifest says {manifest['num_edges']}"
        )
    try:
        return Graph(n, np.array(edges, dtype=np.int64).reshape(-1, 2), x, np.array(labels), k)
    except ValueError as exc:
        raise DatasetError(f"{manifest_path}: {exc}") from exc


def save_graph(g: Graph, directory, name: str = "graph") -> Path:
    """Write ``g`` in manifest format under ``directory``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    edges_name, feats_name, labels_name = f"{name}.edges", f"{name}.features.csv", f"{name}.labels"
    with (directory / edges_name).open("w") as fh:
        for a, b in g.edges:
            fh.write(f"{a}\t{b}\n")
    with (directory / feats_name).open("w") as fh:
        for row in g.features:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    with (directory / labels_name).open("w") as fh:
        fh.writelines(f"{int(c)}\n" for c in g.labels)
    manifest = {
        "num_nodes": g.num_nodes,
        "num_classes": g.num_classes,
        "num_edges": g.num_edges,
        "num_features": g.num_features,
        "edges": edges_name,
        "features": feats_name,
        "labels": labels_name,
    }
    path = directory / f"{name}.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def generate_sbm(blocks, p_in: float, p_out: float, feature_dim: int, feature_shift: float, seed: int) -> Graph:
    """Sample a stochastic block model with Gaussian node features.

    Node features are standard normal; nodes of block ``c`` get
    ``feature_shift`` added to coordinate ``c``.
    """
    blocks = [int(b) for b in blocks]
    if not blocks:
        raise ValueError("empty block list")
    if any(b < 1 for b in blocks):
        raise ValueError("every block must be nonempty")
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    if feature_dim < len(blocks):
        raise ValueError("feature_dim must be at least the number of blocks")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(blocks)), blocks)
    n = labels.size
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(iu.size) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    x = rng.standard_normal((n, feature_dim))
    x[np.arange(n), labels] += feature_shift
    return Graph(n, edges, x, labels, len(blocks))


def sample_split(n: int, train_fraction: float, seed: int) -> Split:
    """Uniform random split with ``floor(train_fraction * n)`` training nodes.

    A forward Fisher-Yates pass over ``0..n-1`` (PCG64 seeded by ``seed``)
    fixes the first ``m`` positions, which become the training set.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    m = int(np.floor(train_fraction * n))
    if m < 1 or n - m < 1:
        raise ValueError(f"train_fraction={train_fraction} leaves an empty side for n={n}")
    return sample_split_size(n, m, seed)


def sample_split_size(n: int, m: int, seed: int) -> Split:
    """Uniform random split of ``0..n-1`` with exactly ``m`` training nodes."""
    if not 1 <= m < n:
        raise ValueError(f"need 1 <= m < n, got m={m}, n={n}")
    return Split(*_fisher_yates_prefix(n, m, seed), seed=seed)


def _fisher_yates_prefix(n: int, m: int, seed: int):
    rng = np.random.Generator(np.random.PCG64(seed))
    draws = rng.integers(np.arange(m), n)
    perm = np.arange(n)
    for i, j in enumerate(draws.tolist()):
        perm[i], perm[j] = perm[j], perm[i]
    return perm[:m], perm[m:]


def split_from_mask(train_mask, seed: int | None = None) -> Split:
    mask = np.asarray(train_mask, dtype=bool)
    idx = np.arange(mask.size)
    return Split(idx[mask], idx[~mask], seed=seed)
