"""Empirical 1-Wasserstein distances between uniform point clouds.

``wasserstein1_exact`` solves the transportation problem as a min-cost flow
with integer supplies ``lcm(a, b) / a`` and demands ``lcm(a, b) / b``, using
successive shortest paths with node potentials. ``wasserstein1_1d`` is the
closed form on the line and ``wasserstein1_sinkhorn`` a log-domain entropic
approximation for instances too large for the exact solver.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

MAX_EXACT_ARCS = 20_000_000


class OTSizeError(ValueError):
    """Instance exceeds the exact solver's size guard."""


class SinkhornConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class TransportPlan:
    """Optimal coupling in integer units; mass of cell ``(i, j)`` is ``flow / scale``.

    ``scale`` is ``lcm(a, b)``, so each row carries ``scale // a`` units and
    each column ``scale // b`` units exactly.
    """

    a: int
    b: int
    scale: int
    rows: np.ndarray
    cols: np.ndarray
    flows: np.ndarray
    cost: float

    @property
    def masses(self) -> np.ndarray:
        return self.flows / self.scale

    def triples(self):
        return [(int(i), int(j), int(f) / self.scale) for i, j, f in zip(self.rows, self.cols, self.flows)]

    def dense(self) -> np.ndarray:
        out = np.zeros((self.a, self.b))
        out[self.rows, self.cols] = self.masses
        return out

    def transpose(self) -> TransportPlan:
        order = np.lexsort((self.rows, self.cols))
        return TransportPlan(
            self.b, self.a, self.scale, self.cols[order], self.rows[order], self.flows[order], self.cost
        )


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("point cloud must be a nonempty list of vectors")
    return arr


def cost_matrix(points_a, points_b) -> np.ndarray:
    a, b = _as_points(points_a), _as_points(points_b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return cdist(a, b)


def wasserstein1_exact(points_a, points_b, force: bool = False):
    """Exact W1 between the uniform empirical measures on two point clouds.

    Returns ``(cost, plan)``. The solve is certified optimal by checking
    complementary slackness of the final potentials, which rules out any
    negative-cost cycle in the residual graph.
    """
    pa, pb = _as_points(points_a), _as_points(points_b)
    if pa.shape[1] != pb.shape[1]:
        raise ValueError(f"dimension mismatch: {pa.shape[1]} vs {pb.shape[1]}")
    a, b = pa.shape[0], pb.shape[0]
    if a * b > MAX_EXACT_ARCS and not force:
        raise OTSizeError(
            f"{a}x{b} instance exceeds {MAX_EXACT_ARCS} arcs; pass force=True or use wasserstein1_sinkhorn"
        )
    scale = math.lcm(a, b)
    if scale > 2**62:
        raise OTSizeError(f"lcm({a}, {b}) overflows 64-bit supplies; use wasserstein1_sinkhorn")
    # canonical orientation makes W(A, B) and W(B, A) bitwise equal
    if (b, pb.tobytes()) < (a, pa.tobytes()):
        cost, plan = _solve(pb, pa, scale)
        return cost, plan.transpose()
    return _solve(pa, pb, scale)


def _solve(pa, pb, scale):
    cmat = cdist(pa, pb)
    flow = _min_cost_flow(cmat, scale // pa.shape[0], scale // pb.shape[0])
    rows, cols = np.nonzero(flow)
    flows = flow[rows, cols]
    cost = float(np.dot(flows.astype(np.float64), cmat[rows, cols]) / scale)
    return cost, TransportPlan(pa.shape[0], pb.shape[0], scale, rows, cols, flows, cost)


def _min_cost_flow(cmat: np.ndarray, supply: int, demand: int) -> np.ndarray:
    """Successive shortest paths on the complete bipartite graph.

    Nodes are numbered sources ``0..a-1`` then sinks ``a..a+b-1``; Dijkstra
    settles the lowest-numbered node among equal tentative distances.
    """
    a, b = cmat.shape
    excess = np.full(a, supply, dtype=np.int64)
    deficit = np.full(b, demand, dtype=np.int64)
    flow = np.zeros((a, b), dtype=np.int64)
    hs = np.zeros(a)
    ht = np.zeros(b)
    inf = np.inf
    while excess.any():
        ds = np.where(excess > 0, 0.0, inf)
        dt = np.full(b, inf)
        pred_t = np.full(b, -1, dtype=np.int64)
        pred_s = np.full(a, -1, dtype=np.int64)
        open_s = np.ones(a, dtype=bool)
        open_t = np.ones(b, dtype=bool)
        target = -1
        while True:
            cand_s = np.where(open_s, ds, inf)
            cand_t = np.where(open_t, dt, inf)
            i = int(np.argmin(cand_s))
            j = int(np.argmin(cand_t))
            if cand_s[i] == inf and cand_t[j] == inf:
                raise RuntimeError("residual graph disconnected; no augmenting path")
            if cand_s[i] <= cand_t[j]:
                open_s[i] = False
                red = np.maximum(cmat[i] + hs[i] - ht, 0.0)
                nd = ds[i] + red
                better = open_t & (nd < dt)
                dt[better] = nd[better]
                pred_t[better] = i
            else:
                open_t[j] = False
                if deficit[j] > 0:
                    target = j
                    break
                back = open_s & (flow[:, j] > 0)
                if back.any():
                    red = np.maximum(-(cmat[:, j] + hs - ht[j]), 0.0)
                    nd = dt[j] + red
                    better = back & (nd < ds)
                    ds[better] = nd[better]
                    pred_s[better] = j
        dist = dt[target]
        hs += np.minimum(ds, dist)
        ht += np.minimum(dt, dist)

        path = []
        j = target
        while True:
            i = int(pred_t[j])
            path.append((i, j))
            jp = int(pred_s[i])
            if jp < 0:
                break
            j = jp
        start = path[-1][0]
        delta = min(int(excess[start]), int(deficit[target]))
        for k in range(len(path) - 1):
            i, _ = path[k]
            delta = min(delta, int(flow[i, path[k + 1][1]]))
        for k, (i, jj) in enumerate(path):
            flow[i, jj] += delta
            if k + 1 < len(path):
                flow[i, path[k + 1][1]] -= delta
        excess[start] -= delta
        deficit[target] -= delta

    _certify(cmat, flow, hs, ht)
    return flow


def _certify(cmat, flow, hs, ht):
    red = cmat + hs[:, None] - ht[None, :]
    tol = 1e-9 * max(1.0, float(cmat.max(initial=0.0)))
    if red.min(initial=0.0) < -tol or (flow > 0).any() and np.abs(red[flow > 0]).max() > tol:
        raise RuntimeError("min-cost flow failed its optimality certificate")


def wasserstein1_1d(values_a, values_b) -> float:
    """W1 on the real line, integrating the gap between quantile functions.

    The quantile functions are piecewise constant on the grids ``k/a`` and
    ``k/b``; both grids are embedded exactly in integer multiples of
    ``1/lcm(a, b)``.
    """
    va = np.sort(np.asarray(values_a, dtype=np.float64).ravel())
    vb = np.sort(np.asarray(values_b, dtype=np.float64).ravel())
    a, b = va.size, vb.size
    if a == 0 or b == 0:
        raise ValueError("both samples must be nonempty")
    scale = math.lcm(a, b)
    step_a, step_b = scale // a, scale // b
    knots = np.union1d(np.arange(1, a + 1, dtype=np.int64) * step_a, np.arange(1, b + 1, dtype=np.int64) * step_b)
    lengths = np.diff(knots, prepend=0)
    # quantile index on the interval ending at each knot
    ia = (knots - 1) // step_a
    ib = (knots - 1) // step_b
    return float(np.dot(lengths, np.abs(va[ia] - vb[ib])) / scale)


def sinkhorn_plan(cmat: np.ndarray, epsilon: float, max_iters: int = 10_000, tol: float = 1e-9):
    """Log-domain Sinkhorn with uniform marginals.

    Returns ``(plan, converged, iterations, violation)`` where ``violation``
    is the sup-norm of the row-marginal error of the returned plan (columns
    are exact after each half-step). The best iterate seen is returned when
    ``max_iters`` runs out.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    a, b = cmat.shape
    log_a = np.full(a, -math.log(a))
    log_b = np.full(b, -math.log(b))
    f = np.zeros(a)
    g = np.zeros(b)
    best = None
    for it in range(1, max_iters + 1):
        f = -epsilon * logsumexp((g[None, :] - cmat) / epsilon + log_b[None, :], axis=1)
        g = -epsilon * logsumexp((f[:, None] - cmat) / epsilon + log_a[:, None], axis=0)
        if it % 10 == 0 or it == max_iters or it == 1:
            plan = np.exp((f[:, None] + g[None, :] - cmat) / epsilon + log_a[:, None] + log_b[None, :])
            violation = float(np.abs(plan.sum(axis=1) - 1.0 / a).max())
            if best is None or violation < best[3]:
                best = (plan, violation <= tol, it, violation)
            if violation <= tol:
                return best
    return best


def wasserstein1_sinkhorn(points_a, points_b, epsilon: float = 1e-2, max_iters: int = 10_000, tol: float = 1e-9) -> float:
    """Transport cost of the entropic plan (no entropy term, no debiasing).

    This over-estimates the exact W1; a :class:`SinkhornConvergenceWarning`
    is issued when the marginal tolerance is not reached.
    """
    cmat = cost_matrix(points_a, points_b)
    plan, converged, iters, violation = sinkhorn_plan(cmat, epsilon, max_iters, tol)
    if not converged:
        warnings.warn(
            f"Sinkhorn stopped after {iters} iterations with marginal violation {violation:.3g}",
            SinkhornConvergenceWarning,
            stacklevel=2,
        )
    return float(np.sum(plan * cmat))


def wasserstein1(points_a, points_b, method: str = "auto", exact_arc_limit: int = MAX_EXACT_ARCS,
                 epsilon_rel: float = 1e-2, max_iters: int = 5_000, tol: float = 1e-7):
    """W1 by the requested route; returns ``(value, route_used)``.

    ``auto`` takes the closed form for 1-D inputs, the exact solver up to
    ``exact_arc_limit`` arcs, and Sinkhorn (epsilon scaled to the mean
    cost) beyond that.
    """
    pa, pb = _as_points(points_a), _as_points(points_b)
    if pa.shape[1] != pb.shape[1]:
        raise ValueError(f"dimension mismatch: {pa.shape[1]} vs {pb.shape[1]}")
    if method == "auto":
        if pa.shape[1] == 1:
            method = "1d"
        elif pa.shape[0] * pb.shape[0] <= exact_arc_limit:
            method = "exact"
        else:
            method = "sinkhorn"
    if method == "1d":
        return wasserstein1_1d(pa[:, 0], pb[:, 0]), method
    if method == "exact":
        return wasserstein1_exact(pa, pb, force=True)[0], method
    if method == "sinkhorn":
        cmat = cdist(pa, pb)
        scale = float(cmat.mean())
        if scale == 0.0:
            return 0.0, method
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SinkhornConvergenceWarning)
            plan = sinkhorn_plan(cmat, epsilon_rel * scale, max_iters, tol)[0]
        return float(np.sum(plan * cmat)), method
    raise ValueError(f"unknown W1 route {method!r}")
