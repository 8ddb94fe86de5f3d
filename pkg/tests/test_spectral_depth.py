import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transot.encoders import sgc_embed
from transot.graph_core import Graph, SparseMatrix, build_normalized_adjacency, generate_sbm, sample_split
from transot.ot import wasserstein1_exact
from transot.spectral_depth import (
    SpectralSummary,
    degree_wasserstein,
    depth_constants,
    depth_diagnostics,
    gcn_depth_envelope,
    principal_vector,
    rho_perp,
    sgc_depth_envelope,
)


def graph(n, edges, x=None, labels=None, k=1):
    x = np.ones((n, 1)) if x is None else np.asarray(x, float)
    labels = np.zeros(n, dtype=int) if labels is None else np.asarray(labels)
    return Graph(n, np.array(edges, dtype=np.int64).reshape(-1, 2), x, labels, k)


class TestRhoPerp:
    def test_two_node_path(self):
        rho, disc = rho_perp(build_normalized_adjacency(graph(2, [[0, 1]])))
        assert rho == pytest.approx(0.0, abs=1e-12) and not disc

    def test_isolated_pair(self):
        rho, disc = rho_perp(build_normalized_adjacency(graph(2, [])))
        assert rho == pytest.approx(1.0) and disc

    def test_triangle(self):
        rho, disc = rho_perp(build_normalized_adjacency(graph(3, [[0, 1], [1, 2], [0, 2]])))
        assert rho == pytest.approx(0.0, abs=1e-12) and not disc

    def test_asymmetric_rejected(self):
        import scipy.sparse as sp

        mat = SparseMatrix(sp.csr_matrix(np.array([[0.5, 0.2], [0.1, 0.5]])), symmetric=False)
        with pytest.raises(ValueError, match="symmetric"):
            rho_perp(mat)

    @pytest.mark.parametrize("seed", range(6))
    def test_iterative_matches_dense(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(50, 500))
        g = generate_sbm([n // 2, n - n // 2], 0.08, 0.02, 2, 0.0, seed=seed)
        adj = build_normalized_adjacency(g)
        dense, dd = rho_perp(adj, method="dense")
        it, di = rho_perp(adj, method="iterative", tol=1e-10)
        assert it == pytest.approx(dense, abs=1e-6)

    def test_bipartite_negative_end(self):
        # a long even cycle has eigenvalues close to -1 under normalization
        n = 40
        g = graph(n, [[i, (i + 1) % n] for i in range(n)])
        adj = build_normalized_adjacency(g)
        lam = np.linalg.eigvalsh(adj.toarray())
        assert rho_perp(adj, method="iterative", tol=1e-11)[0] == pytest.approx(
            max(abs(lam[0]), abs(np.sort(lam)[-2])), abs=1e-6)


class TestConstants:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31))
    def test_summary_invariants(self, seed):
        g = generate_sbm([8, 9], 0.3, 0.1, 3, 1.0, seed=seed)
        adj = build_normalized_adjacency(g)
        s = depth_constants(adj, g.features)
        assert s.rho_perp <= 1 + 1e-10 and s.C1 >= 0 and s.C2 >= 0
        assert np.linalg.norm(adj @ s.u1 - s.u1) <= 1e-9 * np.linalg.norm(s.u1)

    def test_principal_component_has_no_residual(self):
        g = generate_sbm([5, 6], 0.5, 0.1, 2, 0.0, seed=1)
        adj = build_normalized_adjacency(g)
        x = principal_vector(adj)[:, None] @ np.array([[2.0, -1.0]])
        assert depth_constants(adj, x).C2 == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_features(self):
        g = generate_sbm([5, 6], 0.5, 0.1, 2, 0.0, seed=1)
        adj = build_normalized_adjacency(g)
        u1 = principal_vector(adj)
        x = np.random.default_rng(0).normal(size=(11, 2))
        x -= np.outer(u1, u1 @ x) / (u1 @ u1)
        assert depth_constants(adj, x).C2 == pytest.approx(np.linalg.norm(x), rel=1e-12)

    def test_two_node_path(self):
        g = graph(2, [[0, 1]], x=[[1.0], [3.0]])
        s = depth_constants(build_normalized_adjacency(g), g.features)
        np.testing.assert_allclose(s.u1, [math.sqrt(2), math.sqrt(2)])
        assert s.C1 == pytest.approx(math.sqrt(10) / 2)
        assert s.C2 == pytest.approx(math.sqrt(2))


class TestEnvelopes:
    def summary(self, rho=0.5, c1=2.0, c2=3.0):
        return SpectralSummary(rho, np.ones(2), c1, c2, False)

    def test_limit(self):
        assert sgc_depth_envelope(self.summary(), 0.25, 200) == pytest.approx(0.5, abs=1e-12)

    def test_equal_degrees(self):
        g = graph(4, [[0, 1], [2, 3]])
        w = degree_wasserstein(g, [0, 1], [2, 3])
        assert w == 0.0
        assert sgc_depth_envelope(self.summary(), w, 3) == 3.0 * 0.125

    def test_two_node_path(self):
        g = graph(2, [[0, 1]], x=[[1.0], [3.0]])
        adj = build_normalized_adjacency(g)
        s = depth_constants(adj, g.features)
        z = sgc_embed(adj, g.features, 1).z
        measured = wasserstein1_exact(z[[0]], z[[1]])[0]
        assert measured == 0.0
        assert sgc_depth_envelope(s, degree_wasserstein(g, [0], [1]), 1) >= measured

    def test_gcn_envelope(self):
        s = self.summary()
        assert gcn_depth_envelope(s, 0.3, 2, 0.0) == 0.0
        assert gcn_depth_envelope(s, 0.3, 2, 1.0) == sgc_depth_envelope(s, 0.3, 2)
        with pytest.raises(ValueError):
            gcn_depth_envelope(s, 0.3, 2, -1.0)


class TestDiagnostics:
    def test_constant_raw_features(self):
        g = generate_sbm([6, 6], 0.4, 0.1, 2, 0.0, seed=0)
        flat = Graph(g.num_nodes, g.edges, np.ones((12, 2)), g.labels, 2)
        split = sample_split(12, 0.5, 0)
        rows = depth_diagnostics(flat, "sgc", [0], split, T=2)
        assert rows[0]["W_G"] == 0.0 and rows[0]["W_C"] == 0.0 and rows[0]["W_S"] == 0.0

    def test_two_classes_single_distance(self):
        g = generate_sbm([10, 10], 0.4, 0.1, 3, 2.0, seed=4)
        split = sample_split(20, 0.5, 0)
        rows = depth_diagnostics(g, "sgc", [2], split, T=2)
        z = sgc_embed(build_normalized_adjacency(g), g.features, 2).z
        expected = wasserstein1_exact(z[g.labels == 0], z[g.labels == 1])[0]
        assert rows[0]["W_S"] == pytest.approx(expected, abs=1e-12)
        assert set(rows[0]) == {"depth", "W_G", "W_C", "W_S", "envelope_sgc", "rho_perp", "C1", "C2", "beta"}

    def test_separation_shrinks_with_depth(self):
        g = generate_sbm([30, 30, 30], 0.3, 0.05, 6, 2.0, seed=2)
        split = sample_split(90, 0.3, 0)
        rows = depth_diagnostics(g, "sgc", [1, 32], split, T=2)
        assert rows[1]["W_S"] <= rows[0]["W_S"]

    def test_gcn_rows(self):
        g = generate_sbm([8, 8], 0.4, 0.1, 3, 2.0, seed=1)
        split = sample_split(16, 0.5, 0)
        rows = depth_diagnostics(g, "gcn", [1, 2], split, T=2, hidden=4, epochs=10)
        assert all("envelope_gcn" in r and r["beta"] > 0 for r in rows)
