"""Spectral constants of the normalized adjacency and depth-dependent W1 envelopes."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .bounds import expected_class_wasserstein, sample_permutation_splits
from .encoders import encode, max_spectral_norm
from .graph_core import Graph, SparseMatrix, Split, build_normalized_adjacency, degree_statistic
from .ot import wasserstein1, wasserstein1_1d

DENSE_LIMIT = 2000


@dataclass(frozen=True)
class SpectralSummary:
    rho_perp: float
    u1: np.ndarray
    C1: float
    C2: float
    disconnected: bool


def principal_vector(adj: SparseMatrix) -> np.ndarray:
    """``sqrt(d~)``, read off the self-loop entries ``1 / d~_i`` of the normalized adjacency."""
    return 1.0 / np.sqrt(adj.matrix.diagonal())


def _power_top(apply, v1, n, tol, max_iter, rng):
    """Top eigenvalue of a PSD operator restricted to the complement of ``v1``."""
    v = rng.standard_normal(n)
    v -= v1 * (v1 @ v)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return 0.0
    v /= norm
    theta = 0.0
    for _ in range(max_iter):
        w = apply(v)
        w -= v1 * (v1 @ w)
        theta = float(v @ w)
        resid = np.linalg.norm(w - theta * v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        if resid <= tol:
            break
    return theta


def rho_perp(adj: SparseMatrix, tol: float = 1e-9, method: str = "auto", max_iter: int = 200_000, seed: int = 0):
    """Largest |eigenvalue| of the normalized adjacency once ``u1`` is removed.

    Returns ``(rho, disconnected)``. Dense eigendecomposition up to
    ``DENSE_LIMIT`` nodes; beyond that, power iteration on the shifted PSD
    operators ``A + I`` (top of the spectrum) and ``I - A`` (bottom), both
    restricted to the complement of ``u1``.
    """
    if not adj.is_symmetric(tol=1e-12):
        raise ValueError("rho_perp needs a symmetric matrix")
    n = adj.n
    if n == 1:
        return 0.0, False
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "iterative"
    if method == "dense":
        lam = np.sort(np.linalg.eigvalsh(adj.toarray()))[::-1]
        return float(np.abs(lam[1:]).max()), bool(lam[1] >= 1.0 - tol)
    if method != "iterative":
        raise ValueError(f"unknown method {method!r}")
    a = adj.matrix
    v1 = principal_vector(adj)
    v1 = v1 / np.linalg.norm(v1)
    rng = np.random.default_rng(seed)
    top = _power_top(lambda v: a @ v + v, v1, n, tol, max_iter, rng) - 1.0
    bottom = 1.0 - _power_top(lambda v: v - a @ v, v1, n, tol, max_iter, rng)
    rho = max(abs(top), abs(bottom))
    return float(min(rho, 1.0)), bool(top >= 1.0 - 1e-6)


def depth_constants(adj: SparseMatrix, x, rho_method: str = "auto") -> SpectralSummary:
    """``C1 = ||X||_F / ||u1||`` and ``C2 = ||P_perp X||_F`` with ``P_perp = I - u1 u1^T / ||u1||^2``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != adj.n:
        raise ValueError("dimension mismatch")
    u1 = principal_vector(adj)
    unorm = np.linalg.norm(u1)
    c1 = float(np.linalg.norm(x) / unorm)
    resid = x - np.outer(u1, u1 @ x) / unorm**2
    rho, disconnected = rho_perp(adj, method=rho_method)
    return SpectralSummary(rho, u1, c1, float(np.linalg.norm(resid)), disconnected)


def degree_wasserstein(g: Graph, s, t) -> float:
    """W1 between the degree statistic on node sets ``s`` and ``t``."""
    d = degree_statistic(g)
    return wasserstein1_1d(d[np.asarray(s)], d[np.asarray(t)])


def sgc_depth_envelope(summary: SpectralSummary, w1_degree: float, depth: int) -> float:
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    return summary.C1 * w1_degree + summary.C2 * summary.rho_perp**depth


def gcn_depth_envelope(summary: SpectralSummary, w1_degree: float, depth: int, beta: float) -> float:
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return sgc_depth_envelope(summary, w1_degree, depth) * beta**depth


def depth_diagnostics(g: Graph, encoder: str, depths, split: Split, T: int = 4, seed: int = 0,
                      hidden: int = 64, epochs: int = 500, lr: float = 0.01,
                      ot_method: str = "auto", exact_arc_limit: int = 250_000) -> list:
    """Per depth: W_G (train vs test), W_C (class-averaged expected intra-class W1), W_S
    (smallest inter-class W1), the matching envelope for W_G and the spectral constants.

    GCN depths each train their own model on ``split`` with ``seed``.
    """
    adj = build_normalized_adjacency(g)
    summary = depth_constants(adj, g.features)
    k = g.num_classes
    splits = sample_permutation_splits(split.n, split.m, T, seed)
    w_deg = degree_wasserstein(g, split.train, split.test)
    classes = [np.flatnonzero(g.labels == c) for c in range(k)]
    rows = []
    for depth in depths:
        emb, model = encode(g, split, encoder, depth, adj, hidden, epochs, lr, seed)
        z = emb.z
        w_g = wasserstein1(z[split.train], z[split.test], ot_method, exact_arc_limit)[0]
        w_c_per_class, _, _ = expected_class_wasserstein(z, g.labels, splits, k, ot_method, exact_arc_limit)
        w_c = float(np.mean(w_c_per_class))
        if k > 1:
            w_s = min(
                wasserstein1(z[classes[a]], z[classes[b]], ot_method, exact_arc_limit)[0]
                for a, b in itertools.combinations(range(k), 2)
            )
        else:
            w_s = float("nan")
        row = {"depth": depth, "W_G": w_g, "W_C": w_c, "W_S": w_s}
        if encoder == "gcn":
            beta = max_spectral_norm(model)
            row["envelope_gcn"] = gcn_depth_envelope(summary, w_deg, depth, beta)
        else:
            beta = 1.0
            row["envelope_sgc"] = sgc_depth_envelope(summary, w_deg, depth)
        row.update(rho_perp=summary.rho_perp, C1=summary.C1, C2=summary.C2, beta=beta)
        rows.append(row)
    return rows
