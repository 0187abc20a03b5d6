"""GNNMoE assembly: embedding, stacked PT-blocks, enhanced FFN and head."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .blocks import EnhancedFfn, PtBlock, ffn_forward, pt_block_forward
from .exceptions import ContractError, DimensionError, ParseError
from .experts import EXPERT_KINDS
from .graph import GatLike, GcnLike, Graph, PropKind, SageLike
from .init import glorot, zeros

PROP_KINDS = ("gcn", "sage", "gat")


@dataclass
class GnnMoeConfig:
    hidden_dim: int = 64
    num_blocks: int = 2
    prop: str = "gcn"
    dropout: float = 0.1
    tau: float = 1.0
    gate_hidden: int = 16
    ablate_ffn: bool = False
    ablate_residual: bool = False
    force_expert: Optional[str] = None
    gat_slope: float = 0.2
    ln_eps: float = 1e-5
    dtype: str = "float64"

    def __post_init__(self):
        if self.num_blocks < 1:
            raise ContractError("num_blocks must be >= 1")
        if self.hidden_dim < 1 or self.gate_hidden < 1:
            raise ContractError("hidden_dim and gate_hidden must be >= 1")
        if self.prop not in PROP_KINDS:
            raise ContractError(f"prop must be one of {PROP_KINDS}, got {self.prop!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.tau <= 0:
            raise ContractError("tau must be positive")
        if self.force_expert is not None and self.force_expert not in EXPERT_KINDS:
            raise ContractError(f"force_expert must be one of {EXPERT_KINDS}")
        if self.dtype not in ("float64", "float32"):
            raise ContractError("dtype must be float64 or float32")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)


@dataclass(eq=False)
class GnnMoeModel:
    config: GnnMoeConfig
    w0: Tensor
    b0: Tensor
    blocks: list
    ffn: EnhancedFfn
    w6: Tensor
    prop: PropKind

    @property
    def num_features(self) -> int:
        return self.w0.rows

    @property
    def num_classes(self) -> int:
        return self.w6.cols

    def named_parameters(self, trainable_only: bool = False) -> Iterator[tuple[str, Tensor]]:
        for name, t in _walk(self):
            if not trainable_only or t.requires_grad:
                yield name, t

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters(trainable_only=True)]

    def zero_grad(self) -> None:
        for _, t in self.named_parameters():
            t.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.values.copy() for name, t in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        if set(params) != set(state):
            missing = sorted(set(params) ^ set(state))
            raise ContractError(f"state dict keys differ from the model: {missing[:5]}")
        for name, t in params.items():
            value = np.asarray(state[name])
            if value.shape != t.shape:
                raise DimensionError(f"{name}: stored shape {value.shape}, model expects {t.shape}")
            t.values = value.astype(t.values.dtype, copy=True)


def _walk(model: GnnMoeModel):
    yield "w0", model.w0
    yield "b0", model.b0
    for i, block in enumerate(model.blocks):
        p = f"blocks.{i}"
        yield f"{p}.gate.w1", block.gate.w1
        yield f"{p}.gate.w2", block.gate.w2
        for expert in block.experts:
            for k, op in enumerate(expert.t_ops):
                yield f"{p}.experts.{expert.kind}.t{k}.weight", op.weight
                yield f"{p}.experts.{expert.kind}.t{k}.bias", op.bias
        yield f"{p}.alpha_raw", block.alpha_raw
        yield f"{p}.ln_gain", block.ln_gain
        yield f"{p}.ln_bias", block.ln_bias
    ffn = model.ffn
    yield "ffn.hard_gate_weight", ffn.hard_gate_weight
    for expert in ffn.experts:
        for w in ("w3", "w4", "w5"):
            yield f"ffn.experts.{expert.kind}.{w}", getattr(expert, w)
    yield "ffn.beta_raw", ffn.beta_raw
    yield "ffn.ln_gain", ffn.ln_gain
    yield "ffn.ln_bias", ffn.ln_bias
    yield "w6", model.w6
    if isinstance(model.prop, GatLike):
        yield "prop.att_src", model.prop.att_src
        yield "prop.att_dst", model.prop.att_dst


def init_model(config: GnnMoeConfig, num_features: int, num_classes: int,
               rng: np.random.Generator) -> GnnMoeModel:
    """Glorot-uniform weights, zero biases, unit layer-norm gains, alpha = beta = 0.5."""
    d, dt = config.hidden_dim, config.np_dtype
    w0 = glorot(num_features, d, rng, dt)
    b0 = zeros(1, d, dt)
    blocks = [PtBlock.init(d, config.gate_hidden, rng, dt) for _ in range(config.num_blocks)]
    ffn = EnhancedFfn.init(d, rng, config.tau, dt)
    w6 = glorot(d, num_classes, rng, dt)
    if config.prop == "gcn":
        prop = GcnLike()
    elif config.prop == "sage":
        prop = SageLike()
    else:
        prop = GatLike(glorot(d, 1, rng, dt), glorot(d, 1, rng, dt), config.gat_slope)
    model = GnnMoeModel(config, w0, b0, blocks, ffn, w6, prop)
    _freeze_unused(model)
    return model


def _freeze_unused(model: GnnMoeModel) -> None:
    cfg = model.config
    for name, t in model.named_parameters():
        t.requires_grad = True
        if cfg.ablate_ffn and name.startswith("ffn."):
            t.requires_grad = False
        if cfg.force_expert is not None and name.startswith("blocks."):
            part = name.split(".")[2]
            if part == "gate":
                t.requires_grad = False
            elif part == "experts" and name.split(".")[3] != cfg.force_expert:
                t.requires_grad = False
        if cfg.ablate_residual and name.endswith(("alpha_raw", "beta_raw")):
            t.requires_grad = False


def forward(m: GnnMoeModel, g: Graph, rng: Optional[np.random.Generator] = None,
            training: bool = False, *, gumbel_noise: Optional[np.ndarray] = None,
            st_anchor: Optional[np.ndarray] = None) -> Tensor:
    """Logits ``|V| x C`` (the softmax is left to :func:`loss` / :func:`predict`).

    ``gumbel_noise`` freezes the hard-gate noise; ``st_anchor`` turns the
    straight-through mask into ``hard + soft - anchor`` (see
    :func:`gnnmoe.autodiff.straight_through`).
    """
    cfg = m.config
    if g.num_features != m.num_features:
        raise DimensionError(f"graph has {g.num_features} features, model expects {m.num_features}")
    if training and rng is None:
        raise ContractError("training-mode forward needs a random stream")
    x = Tensor(g.features, dtype=cfg.np_dtype)
    x = ad.dropout(x, cfg.dropout, rng, training)
    h0 = ad.relu(ad.add_row(ad.matmul(x, m.w0), m.b0))
    h = h0
    for block in m.blocks:
        h = pt_block_forward(block, m.prop, g, h, h0, dropout=cfg.dropout, rng=rng, training=training,
                             force_expert=cfg.force_expert, ablate_residual=cfg.ablate_residual,
                             eps=cfg.ln_eps)
    if not cfg.ablate_ffn:
        h = ffn_forward(m.ffn, h, h0, rng, training, ablate_residual=cfg.ablate_residual,
                        eps=cfg.ln_eps, noise=gumbel_noise, anchor=st_anchor)
    return ad.matmul(h, m.w6)


def loss(logits: Tensor, labels, mask) -> Tensor:
    """Mean cross-entropy over the node subset ``mask`` (indices or booleans)."""
    index = _as_index(mask, logits.rows)
    if index.size == 0:
        raise ContractError("loss needs a nonempty node subset")
    return ad.cross_entropy(logits, labels, index)


def predict(logits) -> np.ndarray:
    """Per-node argmax; ties resolve to the lowest class index."""
    values = logits.values if isinstance(logits, Tensor) else np.asarray(logits)
    return np.argmax(values, axis=1)


def _as_index(mask, n: int) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.dtype == bool:
        if mask.shape != (n,):
            raise DimensionError(f"boolean mask of shape {mask.shape} for {n} nodes")
        return np.flatnonzero(mask)
    return mask.astype(np.int64).reshape(-1)


# ---------------------------------------------------------------------------
# checkpoints: <stem>.bin holds float64 little-endian matrices back to back,
# <stem>.manifest lists "name rows cols offset" per matrix.
# ---------------------------------------------------------------------------

_MANIFEST_HEADER = "# gnnmoe checkpoint v1: name rows cols byte_offset"


def save_checkpoint(model: GnnMoeModel, path) -> tuple[Path, Path]:
    bin_path = Path(path).with_suffix(".bin")
    manifest_path = Path(path).with_suffix(".manifest")
    lines = [_MANIFEST_HEADER]
    offset = 0
    with open(bin_path, "wb") as fh:
        for name, t in model.named_parameters():
            data = np.ascontiguousarray(t.values, dtype="<f8")
            fh.write(data.tobytes())
            lines.append(f"{name} {t.rows} {t.cols} {offset}")
            offset += data.nbytes
    manifest_path.write_text("\n".join(lines) + "\n")
    return bin_path, manifest_path


def load_checkpoint(path, config: GnnMoeConfig, num_features: int, num_classes: int) -> GnnMoeModel:
    """Rebuild a model from ``config`` and fill it from a saved checkpoint."""
    bin_path = Path(path).with_suffix(".bin")
    manifest_path = Path(path).with_suffix(".manifest")
    for p in (bin_path, manifest_path):
        if not p.exists():
            raise FileNotFoundError(f"checkpoint file not found: {p}")
    blob = bin_path.read_bytes()
    state = {}
    for lineno, line in enumerate(manifest_path.read_text().splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ParseError(manifest_path, lineno, f"expected 4 fields, got {len(parts)}")
        name, rows, cols, offset = parts[0], *map(int, parts[1:])
        end = offset + 8 * rows * cols
        if end > len(blob):
            raise ParseError(manifest_path, lineno, f"{name} extends past the end of {bin_path}")
        state[name] = np.frombuffer(blob[offset:end], dtype="<f8").reshape(rows, cols)
    model = init_model(config, num_features, num_classes, np.random.default_rng(0))
    model.load_state_dict(state)
    return model


def config_to_dict(config: GnnMoeConfig) -> dict:
    return asdict(config)


MODEL_KEYS = tuple(f.name for f in fields(GnnMoeConfig))
