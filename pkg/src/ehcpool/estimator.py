"""Scikit-learn style wrappers around the pooling network.

EhcPoolClassifier exposes the trained graph classifier through the usual
fit/predict/predict_proba surface (get_params/set_params/clone come from
BaseEstimator), so it drops into sklearn model selection utilities that accept
lists of objects as X. SlidingWindowConnectivity turns raw multichannel time
series into attributed graphs and composes with the classifier in a Pipeline.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .autodiff import _stable_sigmoid
from .graphs import AttributedGraph, GraphArrays, validate_graph
from .network import Batch, ModelConfig, Network
from .pooling import ClusterAssignment
from .training import predict_logits, train_network


def _check_graphs(X) -> list[AttributedGraph]:
    graphs = list(X)
    if not graphs:
        raise ValueError("X must contain at least one graph")
    for k, g in enumerate(graphs):
        if not isinstance(g, AttributedGraph):
            raise TypeError(f"X[{k}] is {type(g).__name__}, expected AttributedGraph")
        validate_graph(g)
    d, de = graphs[0].node_dim, graphs[0].edge_dim
    for k, g in enumerate(graphs):
        if g.node_dim != d or g.edge_dim != de:
            raise ValueError(f"X[{k}] dims ({g.node_dim},{g.edge_dim}) != ({d},{de})")
    return graphs


class EhcPoolClassifier(ClassifierMixin, BaseEstimator):
    """Binary graph classifier built on edge-aware hard-clustering pooling."""

    def __init__(self, gamma=5, beta_cap=3, delta=0.0, conv_channels=(16, 16),
                 filter_hidden=None, score_mode="edge_to_node",
                 readout_mode="ne_aggregation", edge_transform=False, lr=0.001,
                 epochs=500, batch_size=8, seed=0):
        self.gamma = gamma
        self.beta_cap = beta_cap
        self.delta = delta
        self.conv_channels = conv_channels
        self.filter_hidden = filter_hidden
        self.score_mode = score_mode
        self.readout_mode = readout_mode
        self.edge_transform = edge_transform
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def _config(self) -> ModelConfig:
        return ModelConfig(conv_channels=tuple(self.conv_channels),
                           filter_hidden=self.filter_hidden, gamma=self.gamma,
                           beta_cap=self.beta_cap, delta=self.delta,
                           score_mode=self.score_mode, readout_mode=self.readout_mode,
                           edge_transform=self.edge_transform, lr=self.lr,
                           epochs=self.epochs, batch_size=self.batch_size,
                           seed=self.seed)

    def fit(self, X, y=None):
        graphs = _check_graphs(X)
        if y is None:
            if any(g.label is None for g in graphs):
                raise ValueError("y is required when graphs carry no labels")
            y = [g.label for g in graphs]
        y = np.asarray(y, dtype=int)
        if set(np.unique(y)) - {0, 1}:
            raise ValueError("labels must be binary 0/1")
        if len(y) != len(graphs):
            raise ValueError(f"{len(y)} labels for {len(graphs)} graphs")
        labeled = [
            g if g.label == int(lab) else AttributedGraph(
                g.node_features, g.edge_features, g.edge_list, label=int(lab))
            for g, lab in zip(graphs, y)
        ]
        cfg = self._config()
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed]))
        self.network_ = Network(graphs[0].node_dim, graphs[0].edge_dim, cfg, rng)
        self.loss_history_ = train_network(self.network_, labeled, cfg, rng)
        self.classes_ = np.array([0, 1])
        return self

    def _require_fitted(self) -> Network:
        if not hasattr(self, "network_"):
            raise NotFittedError("call fit before predicting")
        return self.network_

    def decision_function(self, X) -> np.ndarray:
        net = self._require_fitted()
        return predict_logits(net, _check_graphs(X))

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(int)

    def predict_proba(self, X) -> np.ndarray:
        p = _stable_sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def transform(self, X) -> np.ndarray:
        """Pooled graph embeddings (gamma * conv_channels[1] per graph), eval mode."""
        net = self._require_fitted()
        graphs = _check_graphs(X)
        batch = Batch(graphs, [GraphArrays(g) for g in graphs])
        flat, _ = net.pooled_batch(batch, training=False)
        return flat.data.copy()

    def cluster_assignments(self, X) -> list[ClusterAssignment]:
        """Per-graph hard cluster assignments under the trained parameters."""
        net = self._require_fitted()
        graphs = _check_graphs(X)
        batch = Batch(graphs, [GraphArrays(g) for g in graphs])
        _, assignments = net.forward_batch(batch, training=False)
        return assignments


class SlidingWindowConnectivity(TransformerMixin, BaseEstimator):
    """Stateless transformer: (n, T) series matrices -> attributed graphs."""

    def __init__(self, width=95, step=10):
        self.width = width
        self.step = step

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> list[AttributedGraph]:
        from .synth import WindowConfig, sliding_window_features

        graphs = []
        for series in X:
            series = np.asarray(series, dtype=np.float64)
            wc = WindowConfig(width=self.width, step=self.step, length=series.shape[1])
            x, l, edges = sliding_window_features(series, wc)
            graphs.append(AttributedGraph(x, l, edges))
        return graphs
