"""Wasserstein generalization bounds for transductive node classification.

Two bounds on ``R_u - R_{m,gamma}`` are assembled here:

* the global bound ``(M / gamma) * W(train embeddings, test embeddings)``;
* the class-wise bound ``sum_c (M_c / gamma) E[(m_c / m) W_c] + E[sum_c |u_c/u - m_c/m|] + eps_delta``,

with expectations over fresh random splits estimated by ``T`` samples, either
with all labels (oracle) or from training labels only.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .classifier import (
    lower_quantile,
    margin_matrix,
    margin_train_loss,
    margins_from_scores,
    select_gamma,
    zero_one_test_loss,
    zero_one_train_loss,
)
from .graph_core import Split, sample_split_size
from .ot import wasserstein1

ZERO_DISTANCE = 1e-12
NUMERATOR_TOL = 1e-9
_CHUNK = 4_000_000


class VacuousBound(Exception):
    pass


@dataclass
class BoundReport:
    gamma: float
    percentile: float
    R_u: float | None = None
    R_m_gamma: float | None = None
    empirical_gap: float | None = None
    gap_zero_one: float | None = None
    M_global: float | None = None
    W_global: float | None = None
    bound_global: float | None = None
    M_class: list | None = None
    W_class: list | None = None
    proportion_term: float | None = None
    eps_delta: float | None = None
    delta: float | None = None
    T: int | None = None
    bound_classwise: float | None = None
    W_class_approx: list | None = None
    proportion_term_approx: float | None = None
    bound_classwise_approx: float | None = None
    vacuous: bool = False
    degenerate_split_count: int = 0
    degenerate_split_count_approx: int = 0
    ot_method: str = "exact"
    seeds: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def merge(self, other: BoundReport) -> BoundReport:
        """Fill this report's unset fields from ``other``."""
        for key, value in other.to_dict().items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        self.vacuous = self.vacuous or other.vacuous
        self.degenerate_split_count = max(self.degenerate_split_count, other.degenerate_split_count)
        self.degenerate_split_count_approx = max(
            self.degenerate_split_count_approx, other.degenerate_split_count_approx
        )
        self.seeds = {**other.seeds, **self.seeds}
        return self


@dataclass(frozen=True)
class ClassSplitView:
    train_by_class: list
    test_by_class: list

    @property
    def m_c(self) -> np.ndarray:
        return np.array([len(ix) for ix in self.train_by_class])

    @property
    def u_c(self) -> np.ndarray:
        return np.array([len(ix) for ix in self.test_by_class])


def class_split_view(split: Split, labels, num_classes: int) -> ClassSplitView:
    labels = np.asarray(labels)
    return ClassSplitView(
        [split.train[labels[split.train] == c] for c in range(num_classes)],
        [split.test[labels[split.test] == c] for c in range(num_classes)],
    )


def _embedding_matrix(z) -> np.ndarray:
    return np.asarray(getattr(z, "z", z), dtype=np.float64)


def _score_matrix(f, z) -> np.ndarray:
    """Scores from a classifier object, or ``f`` itself if it is already a score matrix."""
    if hasattr(f, "scores"):
        return f.scores(_embedding_matrix(z))
    return np.asarray(f, dtype=np.float64)


def _percentile_of(values: np.ndarray, percentile: float) -> float:
    if percentile == 1.0:
        return float(values.max())
    return lower_quantile(values, percentile)


def global_change_rates(scores, z, split: Split, true_labels) -> np.ndarray:
    """All ratios ``|rho(z_i, y_i) - rho(z_j, y)| / ||z_i - z_j||`` (train i, test j, any y).

    Raises :class:`VacuousBound` when a near-zero distance pair has a
    non-negligible numerator.
    """
    z = _embedding_matrix(z)
    mm = margin_matrix(scores)
    labels = np.asarray(true_labels)
    train, test = split.train, split.test
    rho_train = mm[train, labels[train]]
    rho_test = mm[test]
    k = mm.shape[1]
    rows = max(1, _CHUNK // max(1, test.size * k))
    chunks = []
    for start in range(0, train.size, rows):
        sl = slice(start, start + rows)
        dist = cdist(z[train[sl]], z[test])[:, :, None]
        num = np.abs(rho_train[sl, None, None] - rho_test[None, :, :])
        degenerate = dist <= ZERO_DISTANCE
        if np.any(degenerate & (num > NUMERATOR_TOL)):
            raise VacuousBound("coinciding train/test embeddings with different margins")
        dist = np.broadcast_to(dist, num.shape)
        keep = ~np.broadcast_to(degenerate, num.shape)
        chunks.append(num[keep] / dist[keep])
    return np.concatenate(chunks)


def margin_change_rate_global(scores, z, split: Split, true_labels, percentile: float = 0.9) -> float:
    """Percentile of the global change rates; ``inf`` marks a vacuous bound."""
    if not 0.0 < percentile <= 1.0:
        raise ValueError("percentile must lie in (0, 1]")
    try:
        rates = global_change_rates(_score_matrix(scores, z), z, split, true_labels)
    except VacuousBound:
        return math.inf
    if rates.size == 0:
        raise ValueError("no train/test pair at positive distance")
    return _percentile_of(rates, percentile)


def margin_change_rate_classwise(scores, z, split: Split, true_labels, c: int, percentile: float = 0.9) -> float:
    """Percentile of ``|rho(z_i, c) - rho(z_j, c)| / ||z_i - z_j||`` over train-class-c and test nodes.

    Only training labels are read; coinciding embeddings are skipped.
    """
    if not 0.0 < percentile <= 1.0:
        raise ValueError("percentile must lie in (0, 1]")
    z = _embedding_matrix(z)
    scores = _score_matrix(scores, z)
    labels = np.asarray(true_labels)
    train_c = split.train[labels[split.train] == c]
    if train_c.size == 0:
        raise ValueError(f"class {c} has no training node")
    nodes = np.concatenate([train_c, split.test])
    if nodes.size < 2:
        raise ValueError("need at least two eligible nodes")
    rho = margin_matrix(scores[nodes])[:, c]
    dist = pdist(z[nodes])
    num = pdist(rho[:, None], "cityblock")
    keep = dist > ZERO_DISTANCE
    if not keep.any():
        return 0.0
    return _percentile_of(num[keep] / dist[keep], percentile)


def epsilon_delta(m: int, u: int, delta: float) -> float:
    """Split-concentration term with bounded difference ``1/m + 1/u``."""
    if m < 1 or u < 1:
        raise ValueError("m and u must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    beta = 1.0 / m + 1.0 / u
    var = m * u * beta**2 / (2.0 * (m + u - 0.5))
    correction = 1.0 / (1.0 - 1.0 / (2.0 * max(m, u)))
    return math.sqrt(var * correction * math.log(1.0 / delta))


def permutation_seeds(seed: int, count: int) -> list:
    return [int(s) for s in np.random.SeedSequence([seed, 0x5EED]).generate_state(count)]


def sample_permutation_splits(n: int, m: int, count: int, seed: int) -> list:
    return [sample_split_size(n, m, s) for s in permutation_seeds(seed, count)]


def class_proportion_gap(labels, split: Split, num_classes: int) -> float:
    labels = np.asarray(labels)
    m_c = np.bincount(labels[split.train], minlength=num_classes)
    u_c = np.bincount(labels[split.test], minlength=num_classes)
    return float(np.abs(u_c / split.u - m_c / split.m).sum())


def proportion_mismatch(labels, n: int, train_fraction: float, T: int = 4, seed: int = 0, splits=None) -> float:
    """Average over sampled splits of ``sum_c |u_c/u - m_c/m|``."""
    labels = np.asarray(labels)
    k = int(labels.max()) + 1
    if splits is None:
        if T < 1:
            raise ValueError("T must be positive")
        m = int(np.floor(train_fraction * n))
        splits = sample_permutation_splits(n, m, T, seed)
    return float(np.mean([class_proportion_gap(labels, s, k) for s in splits]))


def _w1(za, zb, ot_method, exact_arc_limit):
    return wasserstein1(za, zb, method=ot_method, exact_arc_limit=exact_arc_limit)


def expected_class_wasserstein(z, labels, splits, num_classes, ot_method="exact", exact_arc_limit=250_000):
    """Per class, the split-average of ``(m_c/m) W(train_c, test_c)``.

    A class missing from either side of a split contributes 0 for that split
    and is counted in the returned degenerate count. Returns
    ``(per_class_average, degenerate_count, routes_used)``.
    """
    z = _embedding_matrix(z)
    labels = np.asarray(labels)
    totals = np.zeros(num_classes)
    degenerate = 0
    routes = set()
    for s in splits:
        for c in range(num_classes):
            tr = s.train[labels[s.train] == c]
            te = s.test[labels[s.test] == c]
            if tr.size == 0 or te.size == 0:
                degenerate += 1
                continue
            w, route = _w1(z[tr], z[te], ot_method, exact_arc_limit)
            routes.add(route)
            totals[c] += tr.size / s.m * w
    return totals / len(splits), degenerate, routes


def assemble_classwise(m_class, w_class, proportion_term: float, eps: float, gamma: float) -> float:
    return float(sum(mc / gamma * wc for mc, wc in zip(m_class, w_class)) + proportion_term + eps)


def _route_tag(routes) -> str:
    return "+".join(sorted(routes)) if routes else "exact"


def global_bound(g, split: Split, z, f, gamma: float, percentile: float = 0.9, ot_method: str = "exact",
                 exact_arc_limit: int = 250_000) -> BoundReport:
    """Global bound plus the empirical losses it bounds."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    zm = _embedding_matrix(z)
    scores = _score_matrix(f, zm)
    table = margins_from_scores(scores, g.labels)
    r_u = zero_one_test_loss(table, split)
    r_m = margin_train_loss(table, split, gamma)
    m_glob = margin_change_rate_global(scores, zm, split, g.labels, percentile)
    w_glob, route = _w1(zm[split.train], zm[split.test], ot_method, exact_arc_limit)
    vacuous = math.isinf(m_glob)
    bound = math.inf if vacuous else m_glob / gamma * w_glob
    return BoundReport(
        gamma=gamma,
        percentile=percentile,
        R_u=r_u,
        R_m_gamma=r_m,
        empirical_gap=r_u - r_m,
        gap_zero_one=r_u - zero_one_train_loss(table, split),
        M_global=m_glob,
        W_global=w_glob,
        bound_global=bound,
        vacuous=vacuous,
        ot_method=route,
    )


def _class_rates(scores, z, split, labels, num_classes, percentile):
    return [margin_change_rate_classwise(scores, z, split, labels, c, percentile) for c in range(num_classes)]


def classwise_bound(g, split: Split, z, f, gamma: float, percentile: float = 0.9, T: int = 4,
                    delta: float = 0.05, seed: int = 0, splits=None, ot_method: str = "exact",
                    exact_arc_limit: int = 250_000) -> BoundReport:
    """Class-wise bound using the labels of every node.

    The expectation over splits uses ``T`` fresh splits of the same size as
    ``split`` (or the explicit ``splits`` when given). ``M_c`` is evaluated
    once on ``split``.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    zm = _embedding_matrix(z)
    scores = _score_matrix(f, zm)
    k = g.num_classes
    m_class = _class_rates(scores, zm, split, g.labels, k, percentile)
    if splits is None:
        splits = sample_permutation_splits(split.n, split.m, T, seed)
    w_class, degenerate, routes = expected_class_wasserstein(zm, g.labels, splits, k, ot_method, exact_arc_limit)
    prop = float(np.mean([class_proportion_gap(g.labels, s, k) for s in splits]))
    eps = epsilon_delta(split.m, split.u, delta)
    return BoundReport(
        gamma=gamma,
        percentile=percentile,
        M_class=[float(v) for v in m_class],
        W_class=[float(v) for v in w_class],
        proportion_term=prop,
        eps_delta=eps,
        delta=delta,
        T=len(splits),
        bound_classwise=assemble_classwise(m_class, w_class, prop, eps, gamma),
        degenerate_split_count=degenerate,
        ot_method=_route_tag(routes),
        seeds={"permutations": seed},
    )


def sample_training_subsplits(split: Split, T: int, seed: int) -> list:
    """Re-split the training indices only, keeping the original train fraction."""
    m = split.m
    sub_m = min(max(int(np.floor(m * split.m / split.n)), 1), m - 1)
    if m < 2:
        raise ValueError("need at least two training nodes to re-split them")
    out = []
    for s in permutation_seeds(seed, T):
        local = sample_split_size(m, sub_m, s)
        out.append((split.train[local.train], split.train[local.test]))
    return out


def classwise_bound_approx(g, split: Split, z, f, gamma: float, percentile: float = 0.9, T: int = 4,
                           delta: float = 0.05, seed: int = 0, labels=None, ot_method: str = "exact",
                           exact_arc_limit: int = 250_000) -> BoundReport:
    """Class-wise bound estimated from training labels alone.

    Sampled splits partition the original training set; class sizes,
    proportions and class-conditional W1 terms are measured on that
    partition, normalized by its own train/test sizes. Labels of test nodes
    are never read; ``labels`` overrides ``g.labels`` (test entries may be
    arbitrary).
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    zm = _embedding_matrix(z)
    scores = _score_matrix(f, zm)
    k = g.num_classes
    all_labels = np.asarray(g.labels if labels is None else labels)
    known = np.full(split.n, -1, dtype=np.int64)
    known[split.train] = all_labels[split.train]
    m_class = _class_rates(scores, zm, split, known, k, percentile)

    totals = np.zeros(k)
    props = []
    degenerate = 0
    routes = set()
    subsplits = sample_training_subsplits(split, T, seed)
    for tr_all, te_all in subsplits:
        m_sub, u_sub = tr_all.size, te_all.size
        m_c = np.bincount(known[tr_all], minlength=k)
        u_c = np.bincount(known[te_all], minlength=k)
        props.append(float(np.abs(u_c / u_sub - m_c / m_sub).sum()))
        for c in range(k):
            tr = tr_all[known[tr_all] == c]
            te = te_all[known[te_all] == c]
            if tr.size == 0 or te.size == 0:
                degenerate += 1
                continue
            w, route = _w1(zm[tr], zm[te], ot_method, exact_arc_limit)
            routes.add(route)
            totals[c] += tr.size / m_sub * w
    w_class = totals / len(subsplits)
    prop = float(np.mean(props))
    eps = epsilon_delta(split.m, split.u, delta)
    return BoundReport(
        gamma=gamma,
        percentile=percentile,
        M_class=[float(v) for v in m_class],
        eps_delta=eps,
        delta=delta,
        T=len(subsplits),
        W_class_approx=[float(v) for v in w_class],
        proportion_term_approx=prop,
        bound_classwise_approx=assemble_classwise(m_class, w_class, prop, eps, gamma),
        degenerate_split_count_approx=degenerate,
        ot_method=_route_tag(routes),
        seeds={"permutations": seed},
    )


def evaluate_bounds(g, split: Split, z, f, gamma: float | None = None, gamma_quantile: float = 0.5,
                    percentile: float = 0.9, T: int = 4, delta: float = 0.05, seed: int = 0,
                    oracle_labels: bool = True, ot_method: str = "auto",
                    exact_arc_limit: int = 250_000) -> BoundReport:
    """All three bounds for one trained (encoder, classifier) pair.

    ``gamma`` defaults to the ``gamma_quantile`` lower quantile of the
    positive training margins. With ``oracle_labels=False`` the class-wise
    oracle bound is skipped.
    """
    zm = _embedding_matrix(z)
    scores = _score_matrix(f, zm)
    if gamma is None:
        gamma = select_gamma(margins_from_scores(scores, g.labels), split, gamma_quantile)
    kw = dict(ot_method=ot_method, exact_arc_limit=exact_arc_limit)
    report = global_bound(g, split, zm, scores, gamma, percentile, **kw)
    routes = {report.ot_method}
    if oracle_labels:
        cw = classwise_bound(g, split, zm, scores, gamma, percentile, T, delta, seed, **kw)
        routes.add(cw.ot_method)
        report.merge(cw)
    approx = classwise_bound_approx(g, split, zm, scores, gamma, percentile, T, delta, seed, **kw)
    routes.add(approx.ot_method)
    report.merge(approx)
    report.ot_method = _route_tag(set("+".join(routes).split("+")))
    report.seeds = {"permutations": seed}
    return report
