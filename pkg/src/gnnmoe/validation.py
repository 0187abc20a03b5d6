"""Input validation helpers for the estimator front end."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.utils.validation import check_array

from .exceptions import ContractError, DimensionError
from .graph import Graph


def check_graph(X, y=None, adjacency=None, undirected: bool = True):
    """Coerce estimator inputs to ``(graph, classes)``.

    ``X`` is either a :class:`Graph` (labels taken from it unless ``y`` is
    given) or a node-feature matrix accompanied by ``adjacency`` (a dense or
    sparse ``|V| x |V|`` matrix, or an ``(m, 2)`` edge array). Labels of any
    hashable type are encoded to ``0..C-1``; ``classes`` holds the originals.
    """
    if isinstance(X, Graph):
        if adjacency is not None:
            raise ContractError("pass adjacency only with a raw feature matrix")
        if y is None:
            return X, np.arange(X.num_classes)
        y_enc, classes = _encode(y, X.num_nodes)
        return Graph(X.features, y_enc, X.adjacency, len(classes), X.undirected), classes
    features = check_array(X, dtype=np.float64)
    n = features.shape[0]
    if adjacency is None:
        raise ContractError("a raw feature matrix needs an adjacency")
    if y is None:
        y_enc, classes = np.zeros(n, dtype=np.int64), np.array([0])
    else:
        y_enc, classes = _encode(y, n)
    edges = _edges_from(adjacency, n)
    return Graph.from_edges(features, y_enc, edges, num_classes=len(classes), undirected=undirected), classes


def _encode(y, n):
    y = np.asarray(y).reshape(-1)
    if y.shape[0] != n:
        raise DimensionError(f"{y.shape[0]} labels for {n} nodes")
    classes, encoded = np.unique(y, return_inverse=True)
    return encoded.astype(np.int64), classes


def _edges_from(adjacency, n):
    if sp.issparse(adjacency):
        if adjacency.shape != (n, n):
            raise DimensionError(f"adjacency shape {adjacency.shape} for {n} nodes")
        coo = adjacency.tocoo()
        return np.stack([coo.row, coo.col], axis=1)
    arr = np.asarray(adjacency)
    if arr.ndim == 2 and arr.shape == (n, n):
        rows, cols = np.nonzero(arr)
        return np.stack([rows, cols], axis=1)
    if arr.ndim == 2 and arr.shape[1] == 2:
        return arr.astype(np.int64)
    raise DimensionError(f"cannot interpret adjacency of shape {arr.shape} for {n} nodes")


def check_node_index(index, n: int, name: str = "index") -> np.ndarray:
    """Accept a boolean mask or integer indices; return unique sorted indices."""
    arr = np.asarray(index)
    if arr.dtype == bool:
        if arr.shape != (n,):
            raise DimensionError(f"{name}: boolean mask of shape {arr.shape} for {n} nodes")
        arr = np.flatnonzero(arr)
    arr = arr.astype(np.int64).reshape(-1)
    if arr.size == 0:
        raise ContractError(f"{name} is empty")
    if arr.min() < 0 or arr.max() >= n:
        raise ContractError(f"{name} holds node ids outside [0, {n})")
    if np.unique(arr).size != arr.size:
        raise ContractError(f"{name} repeats node ids")
    return np.sort(arr)
