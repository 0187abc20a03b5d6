"""GNNMoE node classification on numpy and scipy.sparse.

Decoupled propagation/transformation experts mixed by a per-node soft gate,
a hard-gated GLU feed-forward block, adaptive residuals, and the training
and experiment tooling around them.
"""

from .data import SyntheticSpec, generate_synthetic, load_dataset, measure_homophily, write_dataset
from .estimator import GNNMoEClassifier
from .exceptions import ContractError, DimensionError, DivergenceError, ParseError
from .graph import GatLike, GcnLike, Graph, SageLike, permute, propagate
from .model import GnnMoeConfig, GnnMoeModel, forward, init_model, load_checkpoint, loss, predict, save_checkpoint
from .training import RunSummary, TrainConfig, make_splits, run_one_seed, run_seeds, train_one

__version__ = "0.1.0"

__all__ = [
    "ContractError", "DimensionError", "DivergenceError", "ParseError",
    "GNNMoEClassifier",
    "GatLike", "GcnLike", "Graph", "SageLike", "permute", "propagate",
    "GnnMoeConfig", "GnnMoeModel", "forward", "init_model", "load_checkpoint", "loss", "predict",
    "save_checkpoint",
    "RunSummary", "TrainConfig", "make_splits", "run_one_seed", "run_seeds", "train_one",
    "SyntheticSpec", "generate_synthetic", "load_dataset", "measure_homophily", "write_dataset",
]
