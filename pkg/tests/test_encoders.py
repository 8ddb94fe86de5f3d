import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import finite_difference
from transot.encoders import (
    GcnModel,
    encode,
    gcn_forward,
    gcn_loss_and_grad,
    init_gcn,
    load_checkpoint,
    max_spectral_norm,
    save_checkpoint,
    sgc_embed,
    train_gcn,
    weight_spectral_norm,
)
from transot.graph_core import Graph, build_normalized_adjacency, generate_sbm, sample_split


def two_node(features):
    return Graph(2, np.array([[0, 1]]), np.asarray(features, dtype=float), np.array([0, 0]), 1)


def ten_node_fixture(seed=0):
    g = generate_sbm([5, 5], 0.7, 0.15, 4, 1.0, seed=seed)
    return g, build_normalized_adjacency(g), sample_split(10, 0.5, seed)


class TestSgc:
    def test_depth_zero_identity(self):
        g = generate_sbm([4, 4], 0.5, 0.1, 3, 1.0, seed=1)
        z = sgc_embed(build_normalized_adjacency(g), g.features, 0)
        np.testing.assert_array_equal(z.z, g.features)
        assert z.encoder == "sgc" and z.depth == 0

    def test_two_node_averaging(self):
        g = two_node([[1.0], [3.0]])
        adj = build_normalized_adjacency(g)
        np.testing.assert_allclose(sgc_embed(adj, g.features, 1).z, [[2.0], [2.0]])
        np.testing.assert_allclose(sgc_embed(adj, g.features, 2).z, [[2.0], [2.0]])

    def test_dimension_mismatch(self):
        g = two_node([[1.0], [3.0]])
        with pytest.raises(ValueError, match="dimension mismatch"):
            sgc_embed(build_normalized_adjacency(g), np.ones((3, 1)), 1)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.integers(0, 6), st.integers(0, 6))
    def test_power_composition(self, seed, a, b):
        g = generate_sbm([6, 7], 0.4, 0.1, 3, 1.0, seed=seed)
        adj = build_normalized_adjacency(g)
        once = sgc_embed(adj, g.features, a + b).z
        twice = sgc_embed(adj, sgc_embed(adj, g.features, a).z, b).z
        np.testing.assert_allclose(once, twice, atol=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.integers(0, 20))
    def test_principal_direction_fixed(self, seed, depth):
        g = generate_sbm([6, 7], 0.4, 0.1, 3, 1.0, seed=seed)
        adj = build_normalized_adjacency(g)
        coeffs = np.random.default_rng(seed).normal(size=(1, 3))
        x = np.sqrt(g.degrees() + 1.0)[:, None] @ coeffs
        np.testing.assert_allclose(sgc_embed(adj, x, depth).z, x, atol=1e-10)


class TestGcnForward:
    def test_zero_features(self):
        g, adj, _ = ten_node_fixture()
        model, _ = init_gcn(4, 3, 5, 2, seed=0)
        for layer in gcn_forward(adj, np.zeros((10, 4)), model):
            assert not layer.z.any()

    def test_identity_on_disconnected(self):
        g = Graph(3, np.zeros((0, 2), dtype=int), np.array([[1.0, 2.0], [0.0, 3.0], [4.0, 0.5]]),
                  np.array([0, 0, 0]), 1)
        out = gcn_forward(build_normalized_adjacency(g), g.features, GcnModel([np.eye(2)]))
        np.testing.assert_allclose(out[1].z, g.features)

    def test_two_node_relu(self):
        g = two_node([[1.0], [-3.0]])
        out = gcn_forward(build_normalized_adjacency(g), g.features, GcnModel([np.array([[1.0]])]))
        np.testing.assert_allclose(out[1].z, [[0.0], [0.0]])
        assert out[0].encoder == "raw" and out[1].encoder == "gcn"

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 4))
    def test_norm_growth(self, seed, layers):
        g, adj, _ = ten_node_fixture(seed % 50)
        model, _ = init_gcn(4, layers, 6, 2, seed=seed)
        beta = max_spectral_norm(model)
        base = np.linalg.norm(g.features)
        for ell, emb in enumerate(gcn_forward(adj, g.features, model)):
            assert np.linalg.norm(emb.z) <= beta**ell * base * (1 + 1e-10) + 1e-12


class TestGcnTraining:
    @pytest.mark.parametrize("layers", [1, 2, 3])
    def test_gradient_matches_finite_differences(self, layers):
        g, adj, split = ten_node_fixture(layers)
        model, readout = init_gcn(4, layers, 5, 2, seed=layers)
        x, labels = g.features, g.labels
        _, grads, d_read = gcn_loss_and_grad(adj, x, model, readout, labels, split.train)
        params = model.weights + [readout]

        def loss():
            return gcn_loss_and_grad(adj, x, model, readout, labels, split.train)[0]

        numeric = finite_difference(loss, params)
        for analytic, approx in zip(grads + [d_read], numeric):
            np.testing.assert_allclose(analytic, approx, rtol=1e-4, atol=1e-8)

    def test_epochs_zero_returns_initialisation(self):
        g, adj, split = ten_node_fixture()
        trained = train_gcn(g, split, 2, hidden=8, epochs=0, seed=5)
        init, _ = init_gcn(g.num_features, 2, 8, g.num_classes, seed=5)
        for a, b in zip(trained.weights, init.weights):
            np.testing.assert_array_equal(a, b)

    def test_loss_decreases_and_deterministic(self):
        g = generate_sbm([5, 5], 1.0, 0.0, 4, 3.0, seed=2)
        split = sample_split(10, 0.5, 1)
        m1, hist = train_gcn(g, split, 2, return_history=True)
        m2 = train_gcn(g, split, 2)
        assert hist[-1] < hist[0]
        for a, b in zip(m1.weights, m2.weights):
            np.testing.assert_array_equal(a, b)


class TestSpectralNorm:
    def test_examples(self):
        assert weight_spectral_norm(np.eye(3)) == pytest.approx(1.0, abs=1e-12)
        assert weight_spectral_norm(np.zeros((3, 2))) == 0.0
        assert weight_spectral_norm(np.diag([2.0, 1.0])) == pytest.approx(2.0, abs=1e-8)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 8), st.integers(1, 8))
    def test_matches_svd(self, seed, r, c):
        w = np.random.default_rng(seed).normal(size=(r, c))
        assert weight_spectral_norm(w) == pytest.approx(np.linalg.svd(w, compute_uv=False)[0], rel=1e-8)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model, _ = init_gcn(4, 3, 5, 2, seed=0)
        save_checkpoint(model, tmp_path / "m.json")
        loaded = load_checkpoint(tmp_path / "m.json")
        for a, b in zip(model.weights, loaded.weights):
            np.testing.assert_array_equal(a, b)

    def test_encode_kinds(self):
        g, adj, split = ten_node_fixture()
        raw, m = encode(g, split, "raw", 3)
        assert m is None and raw.encoder == "raw"
        np.testing.assert_array_equal(raw.z, g.features)
        gcn, model = encode(g, split, "gcn", 2, hidden=4, epochs=5)
        assert gcn.z.shape == (10, 4) and model.layers == 2
