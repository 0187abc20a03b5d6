"""scikit-learn style front end for GNNMoE node classification."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import autodiff as ad
from .graph import Graph
from .model import GnnMoeConfig, forward, init_model, predict
from .training import TrainConfig, evaluate, make_splits, seed_streams, train_one
from .validation import check_graph, check_node_index


class GNNMoEClassifier(ClassifierMixin, BaseEstimator):
    """Transductive node classifier.

    ``fit`` takes a :class:`~gnnmoe.graph.Graph` (or a feature matrix plus an
    ``adjacency`` keyword) and trains on ``train_idx``, early-stopping on
    ``val_idx``. Without explicit indices, a stratified split with
    ``split_fractions`` is drawn from ``random_state`` and kept in ``splits_``.

    Parameters mirror :class:`~gnnmoe.model.GnnMoeConfig` and
    :class:`~gnnmoe.training.TrainConfig`.
    """

    def __init__(self, hidden_dim=64, num_blocks=2, prop="gcn", dropout=0.1, tau=1.0, gate_hidden=16,
                 ablate_ffn=False, ablate_residual=False, force_expert=None, lr=0.01, weight_decay=5e-4,
                 max_epochs=500, patience=100, monitor="acc", split_fractions=(0.48, 0.32, 0.20),
                 dtype="float64", random_state=0):
        self.hidden_dim = hidden_dim
        self.num_blocks = num_blocks
        self.prop = prop
        self.dropout = dropout
        self.tau = tau
        self.gate_hidden = gate_hidden
        self.ablate_ffn = ablate_ffn
        self.ablate_residual = ablate_residual
        self.force_expert = force_expert
        self.lr = lr
        self.weight_decay = weight_decay
        self.max_epochs = max_epochs
        self.patience = patience
        self.monitor = monitor
        self.split_fractions = split_fractions
        self.dtype = dtype
        self.random_state = random_state

    def _configs(self):
        model_cfg = GnnMoeConfig(
            hidden_dim=self.hidden_dim, num_blocks=self.num_blocks, prop=self.prop, dropout=self.dropout,
            tau=self.tau, gate_hidden=self.gate_hidden, ablate_ffn=self.ablate_ffn,
            ablate_residual=self.ablate_residual, force_expert=self.force_expert, dtype=self.dtype,
        )
        train_cfg = TrainConfig(
            lr=self.lr, weight_decay=self.weight_decay, max_epochs=self.max_epochs, patience=self.patience,
            seeds=(self.random_state,), fractions=self.split_fractions, monitor=self.monitor,
        )
        return model_cfg, train_cfg

    def fit(self, X, y=None, *, adjacency=None, train_idx=None, val_idx=None):
        graph, classes = check_graph(X, y, adjacency)
        model_cfg, train_cfg = self._configs()
        split_seed, init_rng, train_rng = seed_streams(int(self.random_state))
        if train_idx is None and val_idx is None:
            splits = make_splits(graph, train_cfg.fractions, split_seed)
        elif train_idx is None or val_idx is None:
            raise ValueError("pass both train_idx and val_idx, or neither")
        else:
            train = check_node_index(train_idx, graph.num_nodes, "train_idx")
            val = check_node_index(val_idx, graph.num_nodes, "val_idx")
            rest = np.setdiff1d(np.arange(graph.num_nodes), np.union1d(train, val))
            splits = (train, val, rest)
        model = init_model(model_cfg, graph.num_features, graph.num_classes, init_rng)
        self.model_, self.history_ = train_one(model, graph, splits, train_cfg, train_rng)
        self.classes_ = classes
        self.splits_ = splits
        self.n_features_in_ = graph.num_features
        self.best_val_score_ = evaluate(self.model_, graph, splits[1])
        return self

    def _logits(self, X, adjacency):
        check_is_fitted(self, "model_")
        graph = X if isinstance(X, Graph) else check_graph(X, None, adjacency)[0]
        with ad.no_grad():
            return forward(self.model_, graph, training=False).values

    def decision_function(self, X, adjacency=None):
        return self._logits(X, adjacency)

    def predict_proba(self, X, adjacency=None):
        logits = self._logits(X, adjacency)
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X, adjacency=None):
        index = predict(self._logits(X, adjacency))
        return self.classes_[index]
