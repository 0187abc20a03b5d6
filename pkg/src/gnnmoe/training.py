"""Full-batch training: stratified splits, AdamW, early stopping, seed sweeps."""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import ContractError, DivergenceError
from .graph import Graph
from .model import GnnMoeConfig, GnnMoeModel, forward, init_model, loss, predict, save_checkpoint

logger = logging.getLogger(__name__)

LR_GRID = (0.005, 0.01, 0.05, 0.1)
DROPOUT_GRID = (0.1, 0.3, 0.5, 0.7, 0.9)


@dataclass
class TrainConfig:
    lr: float = 0.01
    weight_decay: float = 5e-4
    max_epochs: int = 500
    patience: int = 100
    seeds: tuple = tuple(range(10))
    fractions: tuple = (0.48, 0.32, 0.20)
    monitor: str = "acc"

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        self.fractions = tuple(float(f) for f in self.fractions)
        if self.lr < 0:
            raise ContractError("lr must be nonnegative")
        if self.weight_decay < 0:
            raise ContractError("weight_decay must be nonnegative")
        if self.max_epochs < 1:
            raise ContractError("max_epochs must be >= 1")
        if not 0 <= self.patience <= self.max_epochs:
            raise ContractError("patience must lie in [0, max_epochs]")
        check_fractions(self.fractions)
        if self.monitor not in ("acc", "loss"):
            raise ContractError("monitor must be 'acc' or 'loss'")


def check_fractions(fractions) -> None:
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ContractError(f"need three nonnegative split fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ContractError(f"split fractions must sum to 1, got {sum(fractions)}")


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------


def make_splits(g: Graph, fractions=(0.48, 0.32, 0.20), seed: int = 0):
    """Stratified train/val/test node indices.

    Each class is shuffled with ``seed`` and cut at the fraction boundaries,
    with at least one node of every class in each part.
    """
    check_fractions(fractions)
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for c in range(g.num_classes):
        nodes = np.flatnonzero(g.labels == c)
        n = nodes.size
        if n == 0:
            continue
        if n < 3:
            raise ContractError(f"class {c} has {n} nodes; stratified splitting needs at least 3")
        nodes = rng.permutation(nodes)
        n_train = max(1, int(math.floor(fractions[0] * n + 1e-9)))
        n_val = max(1, int(math.floor(fractions[1] * n + 1e-9)))
        while n_train + n_val > n - 1:
            if n_train >= n_val:
                n_train -= 1
            else:
                n_val -= 1
        parts[0].append(nodes[:n_train])
        parts[1].append(nodes[n_train:n_train + n_val])
        parts[2].append(nodes[n_train + n_val:])
    return tuple(np.sort(np.concatenate(p)).astype(np.int64) for p in parts)


# ---------------------------------------------------------------------------
# optimiser
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0


def adamw_step(params: Sequence[Tensor], grads: Sequence[Optional[np.ndarray]], state: AdamState,
               lr: float, weight_decay: float, betas=(0.9, 0.999), eps: float = 1e-8) -> None:
    """One in-place AdamW update: decoupled decay, then bias-corrected Adam."""
    if not state.m:
        state.m = [np.zeros_like(p.values) for p in params]
        state.v = [np.zeros_like(p.values) for p in params]
    b1, b2 = betas
    state.step += 1
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.values)
        if m.shape != p.values.shape or g.shape != p.values.shape:
            raise ContractError("optimizer state does not mirror the parameter shapes")
        p.values -= lr * weight_decay * p.values
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.values -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainState:
    adam: AdamState
    rng: np.random.Generator
    epoch: int = 0
    best_score: float = -math.inf
    best_epoch: int = 0
    best_state: Optional[dict] = None
    since_improvement: int = 0


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_acc: float
    val_loss: float
    elapsed_ms: float

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)


def evaluate(model: GnnMoeModel, g: Graph, mask, logits: Optional[Tensor] = None) -> float:
    """Accuracy of eval-mode predictions over the node subset ``mask``."""
    index = np.asarray(mask)
    if index.dtype == bool:
        index = np.flatnonzero(index)
    if index.size == 0:
        raise ContractError("evaluate needs a nonempty node subset")
    if logits is None:
        with ad.no_grad():
            logits = forward(model, g, training=False)
    return float(np.mean(predict(logits)[index] == g.labels[index]))


def train_one(model: GnnMoeModel, g: Graph, splits, cfg: TrainConfig, rng: np.random.Generator,
              on_epoch=None):
    """Train ``model`` in place and return ``(best_model, history)``.

    The returned model carries the parameters from the epoch with the best
    validation score (first occurrence on ties).
    """
    train_idx, val_idx = splits[0], splits[1]
    params = model.parameters()
    state = TrainState(AdamState(), rng)
    history: list[EpochRecord] = []
    start = time.perf_counter()
    tape = ad.get_tape()
    for epoch in range(1, cfg.max_epochs + 1):
        state.epoch = epoch
        tape.clear()
        model.zero_grad()
        logits = forward(model, g, state.rng, training=True)
        batch_loss = loss(logits, g.labels, train_idx)
        value = batch_loss.item()
        if not math.isfinite(value):
            tape.clear()
            raise DivergenceError(f"non-finite training loss {value!r} at epoch {epoch}")
        ad.backward(batch_loss)
        adamw_step(params, [p.grad for p in params], state.adam, cfg.lr, cfg.weight_decay)

        with ad.no_grad():
            eval_logits = forward(model, g, training=False)
            val_loss = loss(eval_logits, g.labels, val_idx).item()
        val_acc = evaluate(model, g, val_idx, eval_logits)
        record = EpochRecord(epoch, value, val_acc, val_loss, (time.perf_counter() - start) * 1e3)
        history.append(record)
        logger.debug(record.to_json())
        if on_epoch is not None:
            on_epoch(record)

        score = val_acc if cfg.monitor == "acc" else -val_loss
        if score > state.best_score:
            state.best_score = score
            state.best_epoch = epoch
            state.best_state = model.state_dict()
            state.since_improvement = 0
        else:
            state.since_improvement += 1
            if state.since_improvement >= cfg.patience:
                break
    model.load_state_dict(state.best_state)
    model.zero_grad()
    return model, history


# ---------------------------------------------------------------------------
# seed sweeps
# ---------------------------------------------------------------------------


@dataclass
class SeedResult:
    seed: int
    train_acc: float
    val_acc: float
    test_acc: float
    epochs: int
    best_epoch: int
    seconds: float


@dataclass
class RunSummary:
    results: list
    label: str = ""

    @property
    def test_accs(self) -> np.ndarray:
        return np.array([r.test_acc for r in self.results])

    @property
    def mean(self) -> float:
        return float(np.mean(self.test_accs))

    @property
    def std(self) -> float:
        return sample_std(self.test_accs)

    @property
    def total_seconds(self) -> float:
        return float(sum(r.seconds for r in self.results))

    def metrics(self) -> dict:
        """Deterministic metrics (wall-clock excluded)."""
        out = {}
        for key in ("train_acc", "val_acc", "test_acc"):
            vals = np.array([getattr(r, key) for r in self.results])
            out[f"{key}_mean"] = float(np.mean(vals))
            out[f"{key}_std"] = sample_std(vals)
        out["per_seed"] = [
            {"seed": r.seed, "train_acc": r.train_acc, "val_acc": r.val_acc, "test_acc": r.test_acc,
             "epochs": r.epochs, "best_epoch": r.best_epoch}
            for r in self.results
        ]
        return out


def sample_std(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1))


def seed_streams(seed: int):
    """Independent (split seed, init rng, train rng) derived from one seed."""
    ss = np.random.SeedSequence(seed)
    split_ss, init_ss, train_ss = ss.spawn(3)
    return (int(split_ss.generate_state(1)[0]), np.random.default_rng(init_ss),
            np.random.default_rng(train_ss))


def run_one_seed(model_cfg: GnnMoeConfig, train_cfg: TrainConfig, g: Graph, seed: int,
                 checkpoint_dir=None, history_path=None, splits=None):
    split_seed, init_rng, train_rng = seed_streams(seed)
    if splits is None:
        splits = make_splits(g, train_cfg.fractions, split_seed)
    model = init_model(model_cfg, g.num_features, g.num_classes, init_rng)
    t0 = time.perf_counter()
    model, history = train_one(model, g, splits, train_cfg, train_rng)
    seconds = time.perf_counter() - t0
    with ad.no_grad():
        logits = forward(model, g, training=False)
    best_epoch = history[int(np.argmax([_score(r, train_cfg) for r in history]))].epoch
    result = SeedResult(
        seed=seed,
        train_acc=evaluate(model, g, splits[0], logits),
        val_acc=evaluate(model, g, splits[1], logits),
        test_acc=evaluate(model, g, splits[2], logits),
        epochs=len(history),
        best_epoch=best_epoch,
        seconds=seconds,
    )
    if checkpoint_dir is not None:
        save_checkpoint(model, Path(checkpoint_dir) / f"seed{seed}.bin")
    if history_path is not None:
        Path(history_path).write_text("".join(r.to_json() + "\n" for r in history))
    return result, model, history


def _score(record: EpochRecord, cfg: TrainConfig) -> float:
    return record.val_acc if cfg.monitor == "acc" else -record.val_loss


def _run_seed_job(args):
    result, _, _ = run_one_seed(*args)
    return result


def run_seeds(model_cfg: GnnMoeConfig, train_cfg: TrainConfig, g: Graph, *, jobs: int = 1,
              out_dir=None, splits=None, label: str = "") -> RunSummary:
    """Train once per seed (fresh splits and weights each) and collect test accuracy."""
    if not train_cfg.seeds:
        raise ContractError("run_seeds needs at least one seed")
    jobs_args = []
    for seed in train_cfg.seeds:
        ckpt = hist = None
        if out_dir is not None:
            ckpt = Path(out_dir)
            hist = Path(out_dir) / f"history_seed{seed}.jsonl"
        jobs_args.append((model_cfg, train_cfg, g, seed, ckpt, hist, splits))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_seed_job, jobs_args))
    else:
        results = [_run_seed_job(a) for a in jobs_args]
    return RunSummary(results, label)
