"""Optimal-transport generalization bounds for transductive node classification."""

from .bounds import (
    BoundReport,
    classwise_bound,
    classwise_bound_approx,
    epsilon_delta,
    evaluate_bounds,
    global_bound,
    margin_change_rate_classwise,
    margin_change_rate_global,
    proportion_mismatch,
)
from .classifier import MlpClassifier, margins, train_classifier
from .encoders import Embeddings, GcnModel, gcn_forward, sgc_embed, train_gcn, weight_spectral_norm
from .graph_core import Graph, Split, build_normalized_adjacency, generate_sbm, load_graph, sample_split
from .ot import wasserstein1_1d, wasserstein1_exact, wasserstein1_sinkhorn

__version__ = "0.1.0"
