"""Experiment drivers: depth sweep, forced-expert sweep, ablations, timing."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .experts import EXPERT_KINDS
from .graph import Graph
from .model import GnnMoeConfig
from .training import TrainConfig, run_one_seed, run_seeds

BASELINE_LABEL = "baseline-PP-noresidual"


@dataclass
class SweepRow:
    variant: str
    depth: int
    mean: float
    std: float
    seconds: float
    accs: tuple = ()

    def csv(self) -> str:
        return f"{self.variant},{self.depth},{self.mean!r},{self.std!r},{self.seconds:.3f}"


CSV_HEADER = "variant,depth,mean_acc,std_acc,seconds"


def degraded_baseline(cfg: GnnMoeConfig) -> GnnMoeConfig:
    """Gate frozen to PP with both residual paths removed."""
    return replace(cfg, force_expert="PP", ablate_residual=True)


def _row(variant, depth, summary) -> SweepRow:
    return SweepRow(variant, depth, summary.mean, summary.std, summary.total_seconds, tuple(summary.test_accs))


def depth_sweep(g: Graph, depths, model_cfg: GnnMoeConfig, train_cfg: TrainConfig, *,
                include_baseline: bool = True, jobs: int = 1) -> list[SweepRow]:
    if not depths:
        raise ValueError("depth sweep needs at least one depth")
    rows = []
    for depth in depths:
        cfg = replace(model_cfg, num_blocks=int(depth))
        rows.append(_row("gnnmoe", depth, run_seeds(cfg, train_cfg, g, jobs=jobs)))
    if include_baseline:
        for depth in depths:
            cfg = degraded_baseline(replace(model_cfg, num_blocks=int(depth)))
            rows.append(_row(BASELINE_LABEL, depth, run_seeds(cfg, train_cfg, g, jobs=jobs)))
    return rows


def expert_sweep(g: Graph, model_cfg: GnnMoeConfig, train_cfg: TrainConfig, *, jobs: int = 1) -> dict:
    """Mean test accuracy of the full model and of each single-expert variant."""
    out = {"full": run_seeds(model_cfg, train_cfg, g, jobs=jobs)}
    for kind in EXPERT_KINDS:
        out[kind] = run_seeds(replace(model_cfg, force_expert=kind), train_cfg, g, jobs=jobs)
    return out


ABLATIONS = {
    "full": {},
    "w/o FFN": {"ablate_ffn": True},
    "w/o AIR/AR": {"ablate_residual": True},
}


def ablation_sweep(g: Graph, model_cfg: GnnMoeConfig, train_cfg: TrainConfig, *, jobs: int = 1) -> dict:
    return {name: run_seeds(replace(model_cfg, **flags), train_cfg, g, jobs=jobs, label=name)
            for name, flags in ABLATIONS.items()}


@dataclass
class BenchRecord:
    nodes: int
    edges: int
    epochs: int
    train_seconds: float
    test_acc: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def bench(g: Graph, model_cfg: GnnMoeConfig, train_cfg: TrainConfig, seed: int = None) -> BenchRecord:
    """Epochs until early stopping and total training wall-clock for one seed."""
    seed = train_cfg.seeds[0] if seed is None else seed
    t0 = time.perf_counter()
    result, _, history = run_one_seed(model_cfg, train_cfg, g, seed)
    elapsed = time.perf_counter() - t0
    return BenchRecord(g.num_nodes, int(g.edge_pairs().shape[0]), len(history), elapsed, result.test_acc)


def summarize_margins(results: dict, reference: str = "full") -> dict:
    ref = results[reference].mean
    return {name: ref - s.mean for name, s in results.items() if name != reference}


def mean_over(summaries) -> float:
    return float(np.mean(np.concatenate([s.test_accs for s in summaries])))
