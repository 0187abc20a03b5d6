"""Graph storage and the parameter-free propagation operators.

Three propagation families are provided, all over the self-loop augmented
neighbourhood ``N(i) + {i}``:

* :class:`GcnLike` -- symmetric normalisation ``D^-1/2 (A + I) D^-1/2``;
* :class:`SageLike` -- neighbourhood mean ``D^-1 (A + I)``;
* :class:`GatLike` -- single-head additive attention on the hidden features
  themselves (no internal projection, the learned transform lives elsewhere).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from .autodiff import Tensor, apply_op, spmm
from .exceptions import ContractError, DimensionError


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable node-classification graph.

    ``adjacency`` holds the directed edge pairs in CSR form without self-loops;
    row ``i`` lists the neighbours node ``i`` aggregates from.
    """

    features: np.ndarray
    labels: np.ndarray
    adjacency: sp.csr_matrix
    num_classes: int
    undirected: bool = True

    def __post_init__(self):
        feats = np.asarray(self.features)
        if feats.ndim != 2:
            raise DimensionError(f"features must be 2-D, got shape {feats.shape}")
        n = feats.shape[0]
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != n:
            raise DimensionError(f"{labels.shape[0]} labels for {n} nodes")
        if n and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ContractError(f"labels must lie in [0, {self.num_classes})")
        adj = sp.csr_matrix(self.adjacency, dtype=np.float64, copy=True)
        if adj.shape != (n, n):
            raise DimensionError(f"adjacency shape {adj.shape} for {n} nodes")
        adj.sort_indices()
        if _has_duplicates(adj):
            raise ContractError("adjacency contains duplicate edges")
        if adj.diagonal().any():
            raise ContractError("adjacency must not store self-loops")
        adj.data = np.ones_like(adj.data, dtype=np.float64)
        if self.undirected and (adj != adj.T).nnz:
            raise ContractError("undirected graph has an asymmetric edge set")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "adjacency", adj)

    @classmethod
    def from_edges(cls, features, labels, edges, num_classes: Optional[int] = None,
                   undirected: bool = True) -> "Graph":
        """Build a graph from an edge list, dropping self-loops and duplicates
        (and symmetrising when ``undirected``)."""
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        n = features.shape[0]
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ContractError(f"edge endpoint outside [0, {n})")
        src, dst = edges[:, 0], edges[:, 1]
        if undirected:
            src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
        keep = src != dst
        adj = sp.csr_matrix((np.ones(keep.sum()), (src[keep], dst[keep])), shape=(n, n))
        adj.sum_duplicates()
        adj.data[:] = 1.0
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if labels.size else 0
        return cls(features, labels, adj, num_classes, undirected)

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        """Stored directed pairs (twice the undirected count when symmetric)."""
        return self.adjacency.nnz

    def edge_pairs(self) -> np.ndarray:
        """Edges as an ``(m, 2)`` array; undirected edges appear once with ``u < v``."""
        coo = self.adjacency.tocoo()
        pairs = np.stack([coo.row, coo.col], axis=1).astype(np.int64)
        if self.undirected:
            pairs = pairs[pairs[:, 0] < pairs[:, 1]]
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        return pairs[order]

    @cached_property
    def augmented(self) -> sp.csr_matrix:
        """``A + I`` with sorted column indices."""
        aug = (self.adjacency + sp.identity(self.num_nodes, format="csr")).tocsr()
        aug.sort_indices()
        return aug

    @cached_property
    def gcn_matrix(self) -> sp.csr_matrix:
        aug = self.augmented
        deg = np.asarray(aug.sum(axis=1)).ravel()
        d = sp.diags(1.0 / np.sqrt(deg))
        out = (d @ aug @ d).tocsr()
        out.sort_indices()
        return out

    @cached_property
    def sage_matrix(self) -> sp.csr_matrix:
        aug = self.augmented
        deg = np.asarray(aug.sum(axis=1)).ravel()
        out = (sp.diags(1.0 / deg) @ aug).tocsr()
        out.sort_indices()
        return out

    @cached_property
    def gcn_matrix_t(self) -> sp.csr_matrix:
        return self.gcn_matrix if self.undirected else self.gcn_matrix.T.tocsr()

    @cached_property
    def sage_matrix_t(self) -> sp.csr_matrix:
        return self.sage_matrix.T.tocsr()

    def operator(self, name: str, dtype=np.float64):
        """``(matrix, transpose)`` for ``name`` in {gcn, sage}, cast to ``dtype``."""
        key = (name, np.dtype(dtype).str)
        cache = self.__dict__.setdefault("_operator_cache", {})
        if key not in cache:
            m, mt = (self.gcn_matrix, self.gcn_matrix_t) if name == "gcn" else (self.sage_matrix, self.sage_matrix_t)
            cache[key] = (m.astype(dtype), mt.astype(dtype))
        return cache[key]

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and self.undirected == other.undirected
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and (self.adjacency != other.adjacency).nnz == 0
        )

    __hash__ = None


def _has_duplicates(adj: sp.csr_matrix) -> bool:
    rows = np.repeat(np.arange(adj.shape[0]), np.diff(adj.indptr))
    return bool(np.any((adj.indices[1:] == adj.indices[:-1]) & (rows[1:] == rows[:-1])))


# ---------------------------------------------------------------------------
# propagation kinds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GcnLike:
    name = "gcn"


@dataclass(frozen=True)
class SageLike:
    name = "sage"


@dataclass(eq=False)
class GatLike:
    """Attention propagation; ``att_src``/``att_dst`` are ``d' x 1`` columns."""

    att_src: Tensor
    att_dst: Tensor
    slope: float = 0.2
    name = "gat"


PropKind = Union[GcnLike, SageLike, GatLike]


def normalize_gcn(g: Graph) -> sp.csr_matrix:
    return g.gcn_matrix


def normalize_sage(g: Graph) -> sp.csr_matrix:
    return g.sage_matrix


def propagate(kind: PropKind, g: Graph, h: Tensor) -> Tensor:
    if h.rows != g.num_nodes:
        raise DimensionError(f"propagate: {h.rows} rows for a {g.num_nodes}-node graph")
    if isinstance(kind, GcnLike):
        return spmm(*_operands(g, "gcn", h))
    if isinstance(kind, SageLike):
        return spmm(*_operands(g, "sage", h))
    if isinstance(kind, GatLike):
        return gat_propagate(g, h, kind.att_src, kind.att_dst, kind.slope)
    raise TypeError(f"unknown propagation kind {kind!r}")


def _operands(g: Graph, name: str, h: Tensor):
    m, mt = g.operator(name, h.values.dtype)
    return m, h, mt


def attention_weights(g: Graph, h: np.ndarray, att_src: np.ndarray, att_dst: np.ndarray,
                      slope: float) -> np.ndarray:
    """Per-edge attention over ``A + I`` aligned with ``g.augmented.data``."""
    return _attention(g, h, att_src, att_dst, slope)[0]


def _attention(g, h, att_src, att_dst, slope):
    aug = g.augmented
    rows = np.repeat(np.arange(g.num_nodes), np.diff(aug.indptr))
    cols = aug.indices
    s = (h @ att_src).ravel()
    t = (h @ att_dst).ravel()
    e = s[rows] + t[cols]
    z = np.where(e > 0, e, slope * e)
    starts = aug.indptr[:-1]
    zmax = np.maximum.reduceat(z, starts)
    ez = np.exp(z - zmax[rows])
    alpha = ez / np.add.reduceat(ez, starts)[rows]
    return alpha, rows, cols, e


def gat_propagate(g: Graph, h: Tensor, att_src: Tensor, att_dst: Tensor, slope: float = 0.2) -> Tensor:
    """``out_i = sum_j alpha_ij h_j`` with ``alpha_i. = softmax_j leaky(a_s.h_i + a_t.h_j)``."""
    d = h.cols
    if att_src.shape != (d, 1) or att_dst.shape != (d, 1):
        raise DimensionError(f"attention vectors must be {d}x1")
    hv, av_s, av_t = h.values, att_src.values, att_dst.values
    alpha, rows, cols, e = _attention(g, hv, av_s, av_t, slope)
    n = g.num_nodes
    weights = sp.csr_matrix((alpha, g.augmented.indices, g.augmented.indptr), shape=(n, n))
    out = np.asarray(weights @ hv)
    starts = g.augmented.indptr[:-1]

    def back(grad):
        grad_h = np.asarray(weights.T @ grad)
        dalpha = np.einsum("ij,ij->i", grad[rows], hv[cols])
        dz = alpha * (dalpha - np.add.reduceat(alpha * dalpha, starts)[rows])
        de = dz * np.where(e > 0, 1.0, slope)
        ds = np.add.reduceat(de, starts)
        dt = np.bincount(cols, weights=de, minlength=n)
        grad_h = grad_h + np.outer(ds, av_s) + np.outer(dt, av_t)
        return grad_h, hv.T @ ds[:, None], hv.T @ dt[:, None]

    return apply_op(out, (h, att_src, att_dst), back)


def permute(g: Graph, perm) -> Graph:
    """Relabel nodes so that old node ``u`` becomes node ``perm[u]``."""
    perm = np.asarray(perm, dtype=np.int64).reshape(-1)
    n = g.num_nodes
    if perm.shape[0] != n or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ContractError("perm must be a bijection on the node set")
    features = np.empty_like(g.features)
    features[perm] = g.features
    labels = np.empty_like(g.labels)
    labels[perm] = g.labels
    coo = g.adjacency.tocoo()
    adj = sp.csr_matrix((coo.data, (perm[coo.row], perm[coo.col])), shape=(n, n))
    return Graph(features, labels, adj, g.num_classes, g.undirected)


def inverse_permutation(perm) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.shape[0])
    return inv
