"""Plain-text dataset files and a homophily-controlled synthetic generator.

File formats
------------
edges     one ``src<TAB>dst`` pair per line; ``#`` starts a comment line
features  one comma-separated row of reals per node, or a binary file whose
          first line is ``rows cols`` followed by little-endian float32 values
labels    one integer per line
splits    optional, one of ``train``/``val``/``test`` per line
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import ContractError, ParseError
from .graph import Graph

EDGES_FILE = "edges.tsv"
FEATURES_FILE = "features.csv"
LABELS_FILE = "labels.txt"
SPLITS_FILE = "splits.txt"
SPEC_FILE = "spec.txt"

_SPLIT_NAMES = ("train", "val", "test")


@dataclass
class DatasetOnDisk:
    edges: Path
    features: Path
    labels: Path
    splits: Optional[Path] = None
    undirected: bool = True

    @classmethod
    def from_dir(cls, directory, undirected: bool = True) -> "DatasetOnDisk":
        d = Path(directory)
        splits = d / SPLITS_FILE
        features = d / FEATURES_FILE
        if not features.exists() and (d / "features.bin").exists():
            features = d / "features.bin"
        return cls(d / EDGES_FILE, features, d / LABELS_FILE, splits if splits.exists() else None, undirected)


@dataclass
class SyntheticSpec:
    num_nodes: int = 1000
    num_classes: int = 4
    feature_dim: int = 16
    homophily: float = 0.8
    mean_degree: float = 10.0
    feature_noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.homophily <= 1.0:
            raise ContractError(f"homophily must lie in [0, 1], got {self.homophily}")
        if self.mean_degree < 1:
            raise ContractError(f"mean degree must be >= 1, got {self.mean_degree}")
        if self.num_nodes < 2 or self.num_classes < 1 or self.feature_dim < 1:
            raise ContractError("need num_nodes >= 2, num_classes >= 1, feature_dim >= 1")
        if self.feature_noise < 0:
            raise ContractError("feature noise must be nonnegative")


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------


def _read_lines(path: Path):
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            yield lineno, line.rstrip("\n")


def read_labels(path) -> np.ndarray:
    path = Path(path)
    labels = []
    for lineno, line in _read_lines(path):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        try:
            value = int(text)
        except ValueError:
            raise ParseError(path, lineno, f"expected an integer label, got {text!r}") from None
        if value < 0:
            raise ParseError(path, lineno, f"negative label {value}")
        labels.append(value)
    return np.array(labels, dtype=np.int64)


def read_features(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".bin":
        return _read_binary_features(path)
    rows = []
    width = None
    for lineno, line in _read_lines(path):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        try:
            row = [float(tok) for tok in text.split(",")]
        except ValueError:
            raise ParseError(path, lineno, "feature row holds a non-numeric field") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(path, lineno, f"ragged feature row: {len(row)} fields, expected {width}")
        rows.append(row)
    if not rows:
        raise ParseError(path, None, "no feature rows")
    return np.array(rows, dtype=np.float64)


def _read_binary_features(path: Path) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    blob = path.read_bytes()
    newline = blob.find(b"\n")
    if newline < 0:
        raise ParseError(path, 1, "missing 'rows cols' header line")
    try:
        rows, cols = (int(x) for x in blob[:newline].decode("ascii").split())
    except ValueError:
        raise ParseError(path, 1, "header must be 'rows cols'") from None
    body = blob[newline + 1:]
    if len(body) != 4 * rows * cols:
        raise ParseError(path, None, f"expected {4 * rows * cols} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float64)


def read_edges(path, num_nodes: int) -> np.ndarray:
    path = Path(path)
    edges = []
    for lineno, line in _read_lines(path):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.strip().split("\t")
        if len(parts) != 2:
            raise ParseError(path, lineno, f"expected 'src<TAB>dst', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(path, lineno, f"non-integer node index in {line!r}") from None
        if not (0 <= u < num_nodes and 0 <= v < num_nodes):
            raise ParseError(path, lineno, f"node index outside [0, {num_nodes})")
        edges.append((u, v))
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def read_splits(path, num_nodes: int):
    path = Path(path)
    names = []
    for lineno, line in _read_lines(path):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if text not in _SPLIT_NAMES:
            raise ParseError(path, lineno, f"split must be one of {_SPLIT_NAMES}, got {text!r}")
        names.append(text)
    if len(names) != num_nodes:
        raise ParseError(path, None, f"{len(names)} split entries for {num_nodes} nodes")
    names = np.array(names)
    return tuple(np.flatnonzero(names == s) for s in _SPLIT_NAMES)


def load_dataset(spec: DatasetOnDisk):
    """Parse the three (or four) files into ``(graph, splits_or_None)``."""
    features = read_features(spec.features)
    labels = read_labels(spec.labels)
    if labels.shape[0] != features.shape[0]:
        raise ParseError(spec.labels, None,
                         f"{labels.shape[0]} labels but {features.shape[0]} feature rows in {spec.features}")
    edges = read_edges(spec.edges, features.shape[0])
    graph = Graph.from_edges(features, labels, edges, undirected=spec.undirected)
    splits = read_splits(spec.splits, graph.num_nodes) if spec.splits is not None else None
    return graph, splits


def write_dataset(g: Graph, directory, splits=None, binary_features: bool = False) -> DatasetOnDisk:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / EDGES_FILE, "w") as fh:
        fh.write("# src\tdst\n")
        for u, v in g.edge_pairs():
            fh.write(f"{u}\t{v}\n")
    if binary_features:
        feat_path = d / "features.bin"
        with open(feat_path, "wb") as fh:
            fh.write(f"{g.num_nodes} {g.num_features}\n".encode("ascii"))
            fh.write(np.ascontiguousarray(g.features, dtype="<f4").tobytes())
    else:
        feat_path = d / FEATURES_FILE
        with open(feat_path, "w") as fh:
            for row in g.features:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")
    (d / LABELS_FILE).write_text("".join(f"{int(y)}\n" for y in g.labels))
    splits_path = None
    if splits is not None:
        names = np.empty(g.num_nodes, dtype=object)
        for name, idx in zip(_SPLIT_NAMES, splits):
            names[idx] = name
        splits_path = d / SPLITS_FILE
        splits_path.write_text("".join(f"{s}\n" for s in names))
    return DatasetOnDisk(d / EDGES_FILE, feat_path, d / LABELS_FILE, splits_path, g.undirected)


def dataset_fingerprint(spec: DatasetOnDisk) -> str:
    """SHA-256 over the raw bytes of every dataset file."""
    h = hashlib.sha256()
    for p in (spec.edges, spec.features, spec.labels, spec.splits):
        if p is not None:
            h.update(Path(p).name.encode())
            h.update(Path(p).read_bytes())
    return h.hexdigest()


def graph_fingerprint(g: Graph) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(g.features, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(g.labels, dtype="<i8").tobytes())
    h.update(np.ascontiguousarray(g.edge_pairs(), dtype="<i8").tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# synthetic graphs
# ---------------------------------------------------------------------------


def generate_synthetic(spec: SyntheticSpec) -> Graph:
    """Round-robin labels, Gaussian class blobs, and edges whose same-class
    probability is ``spec.homophily``."""
    n, C = spec.num_nodes, spec.num_classes
    rng = np.random.default_rng(spec.seed)
    labels = np.arange(n) % C
    means = np.zeros((C, spec.feature_dim))
    means[np.arange(C), np.arange(C) % spec.feature_dim] = 1.0
    features = means[labels] + spec.feature_noise * rng.standard_normal((n, spec.feature_dim))

    target = int(round(n * spec.mean_degree / 2))
    members = [np.flatnonzero(labels == c) for c in range(C)]
    sizes = np.array([m.size for m in members])
    same_pairs = int(np.sum(sizes * (sizes - 1) // 2))
    cross_pairs = n * (n - 1) // 2 - same_pairs
    available = (same_pairs if spec.homophily > 0 else 0) + (cross_pairs if spec.homophily < 1 else 0)
    if target > available:
        raise ContractError(f"{target} edges requested but only {available} node pairs are eligible")
    if spec.homophily > 0 and same_pairs == 0 or spec.homophily < 1 and cross_pairs == 0:
        raise ContractError("homophily level is infeasible for this class layout")

    edges: set = set()
    max_attempts = 1000 * target + 1000
    attempts = 0
    while len(edges) < target:
        attempts += 1
        if attempts > max_attempts:
            raise ContractError("edge sampling stalled; requested density is too close to saturation")
        u = int(rng.integers(n))
        cu = labels[u]
        if rng.random() < spec.homophily:
            pool = members[cu]
            if pool.size < 2:
                continue
            v = int(pool[rng.integers(pool.size)])
        else:
            other = int(rng.integers(C - 1))
            other += other >= cu
            pool = members[other]
            v = int(pool[rng.integers(pool.size)])
        if u == v:
            continue
        edges.add((min(u, v), max(u, v)))
    edge_arr = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)
    return Graph.from_edges(features, labels, edge_arr, num_classes=C, undirected=True)


def measure_homophily(g: Graph) -> float:
    """Fraction of edges whose endpoints share a label."""
    pairs = g.edge_pairs()
    if pairs.shape[0] == 0:
        raise ContractError("homophily is undefined for an edgeless graph")
    return float(np.mean(g.labels[pairs[:, 0]] == g.labels[pairs[:, 1]]))


def spec_to_text(spec: SyntheticSpec) -> str:
    return "".join(f"{k}={v}\n" for k, v in asdict(spec).items())
