"""Offline conversion of the Planetoid citation files (``ind.<name>.*``) into a manifest dataset.

Follows the usual reading of those files: training+validation rows come
from ``allx``/``ally``, test rows from ``tx``/``ty`` placed at the positions
listed in ``test.index``. CiteSeer's missing test positions become
all-zero feature rows with label 0. Self-loops and repeated neighbours in
``graph`` are dropped, so each undirected edge is counted once.
"""

from __future__ import annotations

import pickle
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph_core import Graph, save_graph

_PARTS = ("x", "y", "tx", "ty", "allx", "ally", "graph")


def _load_part(raw_dir: Path, name: str, part: str):
    path = raw_dir / f"ind.{name}.{part}"
    if not path.exists():
        raise FileNotFoundError(f"{path}: missing file")
    with path.open("rb") as fh:
        return pickle.load(fh, encoding="latin1")


def _dense(mat) -> np.ndarray:
    return mat.toarray() if sp.issparse(mat) else np.asarray(mat)


def read_planetoid(raw_dir, name: str) -> Graph:
    raw_dir = Path(raw_dir)
    parts = {p: _load_part(raw_dir, name, p) for p in _PARTS}
    index_path = raw_dir / f"ind.{name}.test.index"
    if not index_path.exists():
        raise FileNotFoundError(f"{index_path}: missing file")
    test_index = np.array([int(line) for line in index_path.read_text().split()], dtype=np.int64)
    sorted_test = np.sort(test_index)

    allx, ally = _dense(parts["allx"]), _dense(parts["ally"])
    tx, ty = _dense(parts["tx"]), _dense(parts["ty"])
    if name.lower() == "citeseer":
        full = np.arange(sorted_test.min(), sorted_test.max() + 1)
        tx_ext = np.zeros((full.size, tx.shape[1]))
        ty_ext = np.zeros((full.size, ty.shape[1]))
        tx_ext[sorted_test - sorted_test.min()] = tx
        ty_ext[sorted_test - sorted_test.min()] = ty
        tx, ty = tx_ext, ty_ext
        sorted_test = full

    x = np.vstack([allx, tx])
    y = np.vstack([ally, ty])
    # test rows arrive in sorted order but belong at the listed positions
    x[test_index] = x[sorted_test]
    y[test_index] = y[sorted_test]
    labels = y.argmax(axis=1)

    n = x.shape[0]
    pairs = set()
    for src, nbrs in parts["graph"].items():
        for dst in nbrs:
            a, b = int(src), int(dst)
            if a == b or max(a, b) >= n:
                continue
            pairs.add((min(a, b), max(a, b)))
    edges = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    return Graph(n, edges, x.astype(np.float64), labels, int(y.shape[1]))


def convert_planetoid(raw_dir, name: str, out_dir) -> Path:
    """Write ``<out_dir>/<name>.json`` plus its data files; returns the manifest path."""
    return save_graph(read_planetoid(raw_dir, name), out_dir, name=name.lower())
