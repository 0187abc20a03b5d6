"""Soft-gated PT-block and hard-gated enhanced FFN."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import ContractError, DimensionError
from .experts import EXPERT_KINDS, Expert, all_expert_outputs, apply_expert
from .graph import Graph, PropKind
from .init import glorot, ones, zeros

GLU_KINDS = ("SwishGLU", "GEGLU", "REGLU")
_GLU_ACTIVATION = {"SwishGLU": "swish", "GEGLU": "gelu", "REGLU": "relu"}


@dataclass(eq=False)
class SoftGate:
    w1: Tensor  # d' x d_g
    w2: Tensor  # d_g x 4

    @classmethod
    def init(cls, dim, gate_hidden, rng, dtype=np.float64):
        return cls(glorot(dim, gate_hidden, rng, dtype), glorot(gate_hidden, len(EXPERT_KINDS), rng, dtype))


@dataclass(eq=False)
class PtBlock:
    gate: SoftGate
    experts: list
    alpha_raw: Tensor
    ln_gain: Tensor
    ln_bias: Tensor

    @classmethod
    def init(cls, dim, gate_hidden, rng, dtype=np.float64):
        return cls(
            gate=SoftGate.init(dim, gate_hidden, rng, dtype),
            experts=[Expert.init(kind, dim, rng, dtype) for kind in EXPERT_KINDS],
            alpha_raw=zeros(1, 1, dtype),
            ln_gain=ones(1, dim, dtype),
            ln_bias=zeros(1, dim, dtype),
        )

    @property
    def alpha(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.alpha_raw.item())))


@dataclass(eq=False)
class GluExpert:
    kind: str
    w3: Tensor
    w4: Tensor
    w5: Tensor

    def __post_init__(self):
        if self.kind not in GLU_KINDS:
            raise ValueError(f"unknown GLU kind {self.kind!r}")

    @classmethod
    def init(cls, kind, dim, rng, dtype=np.float64):
        return cls(kind, *(glorot(dim, dim, rng, dtype) for _ in range(3)))


@dataclass(eq=False)
class EnhancedFfn:
    hard_gate_weight: Tensor  # d' x 3
    experts: list
    beta_raw: Tensor
    ln_gain: Tensor
    ln_bias: Tensor
    temperature: float = 1.0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ContractError("Gumbel temperature must be positive")

    @classmethod
    def init(cls, dim, rng, temperature=1.0, dtype=np.float64):
        return cls(
            hard_gate_weight=glorot(dim, len(GLU_KINDS), rng, dtype),
            experts=[GluExpert.init(kind, dim, rng, dtype) for kind in GLU_KINDS],
            beta_raw=zeros(1, 1, dtype),
            ln_gain=ones(1, dim, dtype),
            ln_bias=zeros(1, dim, dtype),
            temperature=temperature,
        )

    @property
    def beta(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.beta_raw.item())))


# ---------------------------------------------------------------------------
# PT-block
# ---------------------------------------------------------------------------


def soft_gate(gate: SoftGate, h: Tensor) -> Tensor:
    """Per-node expert weights, ``softmax(relu(h W1) W2)``, shape ``|V| x 4``."""
    if h.cols != gate.w1.rows:
        raise DimensionError(f"soft gate expects width {gate.w1.rows}, got {h.cols}")
    return ad.softmax_rows(ad.matmul(ad.relu(ad.matmul(h, gate.w1)), gate.w2))


def pt_block_forward(b: PtBlock, kind: PropKind, g: Graph, h_prev: Tensor, h0: Tensor, *,
                     dropout: float = 0.0, rng: Optional[np.random.Generator] = None,
                     training: bool = False, force_expert: Optional[str] = None,
                     ablate_residual: bool = False, eps: float = 1e-5) -> Tensor:
    """Mix the four experts by the soft gate, blend with ``h0`` by ``alpha``, then
    layer-normalise.

    ``force_expert`` replaces the learned gate with a constant one-hot weight on
    the named expert.
    """
    if h_prev.shape != h0.shape:
        raise DimensionError(f"h_prev {h_prev.shape} and h0 {h0.shape} differ")
    if force_expert is not None:
        expert = b.experts[EXPERT_KINDS.index(force_expert)]
        mixed = apply_expert(expert, kind, g, h_prev, dropout, rng, training)
    else:
        weights = soft_gate(b.gate, h_prev)
        outs = all_expert_outputs(b.experts, kind, g, h_prev, dropout, rng, training)
        mixed = ad.weighted_sum(outs, weights)
    if not ablate_residual:
        mixed = ad.mix(h0, mixed, ad.sigmoid(b.alpha_raw))
    return ad.layernorm_rows(mixed, b.ln_gain, b.ln_bias, eps)


# ---------------------------------------------------------------------------
# enhanced FFN
# ---------------------------------------------------------------------------


def gate_logits(ffn: EnhancedFfn, h: Tensor) -> Tensor:
    """Mean-pool the nodes and project onto the three GLU experts (1 x 3)."""
    return ad.matmul(ad.mean_rows(h), ffn.hard_gate_weight)


def gumbel_select(logits: Tensor, tau: float, rng: Optional[np.random.Generator], training: bool, *,
                  noise: Optional[np.ndarray] = None, anchor: Optional[np.ndarray] = None):
    """Straight-through Gumbel-Softmax over a 1 x k logit row.

    Training adds Gumbel(0, 1) noise (drawn from ``rng`` unless ``noise`` is
    given) and returns a one-hot mask whose gradient flows through
    ``softmax((logits + noise) / tau)``. Evaluation takes the plain argmax.
    Returns ``(index, mask)``.
    """
    if tau <= 0:
        raise ContractError("Gumbel temperature must be positive")
    k = logits.cols
    if not training:
        index = int(np.argmax(logits.values[0]))
        return index, Tensor(np.eye(k, dtype=logits.values.dtype)[index : index + 1])
    if noise is None:
        noise = rng.gumbel(size=(1, k))
    noise = np.asarray(noise, dtype=logits.values.dtype).reshape(1, k)
    soft = ad.softmax_rows(ad.mul_const(ad.add(logits, Tensor(noise)), 1.0 / tau))
    index = int(np.argmax(soft.values[0]))
    hard = np.zeros((1, k), dtype=logits.values.dtype)
    hard[0, index] = 1.0
    return index, ad.straight_through(soft, hard, anchor)


def hard_gate(ffn: EnhancedFfn, h: Tensor, rng: Optional[np.random.Generator], training: bool, *,
              noise: Optional[np.ndarray] = None, anchor: Optional[np.ndarray] = None):
    return gumbel_select(gate_logits(ffn, h), ffn.temperature, rng, training, noise=noise, anchor=anchor)


def glu_expert(e: GluExpert, h: Tensor) -> Tensor:
    """``(act(h W3) * h W4) W5`` with the activation fixed by the expert kind."""
    if h.cols != e.w3.rows:
        raise DimensionError(f"GLU expects width {e.w3.rows}, got {h.cols}")
    gate = ad.activation(ad.matmul(h, e.w3), _GLU_ACTIVATION[e.kind])
    return ad.matmul(ad.mul(gate, ad.matmul(h, e.w4)), e.w5)


def ffn_forward(ffn: EnhancedFfn, h: Tensor, h0: Tensor, rng: Optional[np.random.Generator],
                training: bool, *, ablate_residual: bool = False, eps: float = 1e-5,
                noise: Optional[np.ndarray] = None, anchor: Optional[np.ndarray] = None) -> Tensor:
    if h.shape != h0.shape:
        raise DimensionError(f"h {h.shape} and h0 {h0.shape} differ")
    index, mask = hard_gate(ffn, h, rng, training, noise=noise, anchor=anchor)
    if mask.requires_grad or anchor is not None:
        # every expert is evaluated so the unselected mask entries still see a gradient
        # (and, with an anchor, so the surrogate mask value reaches the output)
        outs = [glu_expert(expert, h) for expert in ffn.experts]
        z = ad.weighted_sum(outs, ad.matmul(Tensor(np.ones((h.rows, 1), dtype=h.values.dtype)), mask))
    else:
        z = glu_expert(ffn.experts[index], h)
    if not ablate_residual:
        z = ad.mix(h0, z, ad.sigmoid(ffn.beta_raw))
    return ad.layernorm_rows(z, ffn.ln_gain, ffn.ln_bias, eps)
