"""Transformation primitive and the four message-passing experts.

An expert name is read left to right in application order: ``PT`` propagates
first and transforms second, ``TP`` the reverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .autodiff import Tensor, dense, dropout
from .exceptions import DimensionError
from .graph import Graph, PropKind, propagate
from .init import glorot, zeros

EXPERT_KINDS = ("PP", "PT", "TP", "TT")


@dataclass(eq=False)
class TransformOp:
    """``relu(h @ weight + bias)`` with a square weight."""

    weight: Tensor
    bias: Tensor

    def __post_init__(self):
        d = self.weight.rows
        if self.weight.shape != (d, d):
            raise DimensionError(f"transform weight must be square, got {self.weight.shape}")
        if self.bias.shape != (1, d):
            raise DimensionError(f"transform bias must be 1x{d}, got {self.bias.shape}")

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator, dtype=np.float64) -> "TransformOp":
        return cls(glorot(dim, dim, rng, dtype), zeros(1, dim, dtype))

    def __call__(self, h: Tensor) -> Tensor:
        return transform(self, h)


def transform(op: TransformOp, h: Tensor) -> Tensor:
    if h.cols != op.weight.rows:
        raise DimensionError(f"transform input width {h.cols} != {op.weight.rows}")
    return dense(h, op.weight, op.bias, "relu")


@dataclass(eq=False)
class Expert:
    kind: str
    t_ops: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in EXPERT_KINDS:
            raise ValueError(f"unknown expert kind {self.kind!r}")
        if len(self.t_ops) != self.kind.count("T"):
            raise ValueError(f"expert {self.kind} needs {self.kind.count('T')} transform ops")

    @classmethod
    def init(cls, kind: str, dim: int, rng: np.random.Generator, dtype=np.float64) -> "Expert":
        return cls(kind, [TransformOp.init(dim, rng, dtype) for _ in range(kind.count("T"))])


def apply_expert(e: Expert, kind: PropKind, g: Graph, h: Tensor,
                 dropout_rate: float = 0.0, rng: Optional[np.random.Generator] = None,
                 training: bool = False) -> Tensor:
    if h.rows != g.num_nodes:
        raise DimensionError(f"expert input has {h.rows} rows for {g.num_nodes} nodes")
    t_ops = iter(e.t_ops)
    out = h
    for step in e.kind:
        if step == "P":
            out = propagate(kind, g, out)
        else:
            out = transform(next(t_ops), out)
    return dropout(out, dropout_rate, rng, training)


def all_expert_outputs(experts, kind: PropKind, g: Graph, h: Tensor, dropout_rate: float = 0.0,
                       rng: Optional[np.random.Generator] = None, training: bool = False) -> list:
    """Outputs of the experts in ``PP, PT, TP, TT`` order.

    ``P(h)`` is computed once and shared by ``PP`` and ``PT``; each output is
    bitwise identical to :func:`apply_expert` on the same expert.
    """
    if h.rows != g.num_nodes:
        raise DimensionError(f"expert input has {h.rows} rows for {g.num_nodes} nodes")
    by_kind = {e.kind: e for e in experts}
    ph = propagate(kind, g, h)
    raw = {
        "PP": propagate(kind, g, ph),
        "PT": transform(by_kind["PT"].t_ops[0], ph),
        "TP": propagate(kind, g, transform(by_kind["TP"].t_ops[0], h)),
        "TT": transform(by_kind["TT"].t_ops[1], transform(by_kind["TT"].t_ops[0], h)),
    }
    return [dropout(raw[k], dropout_rate, rng, training) for k in EXPERT_KINDS]
