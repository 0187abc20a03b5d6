"""Command-line entry point: ``gnnmoe {gen,train,eval,sweep-depth,bench}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .config import build_configs, format_config, parse_overrides, parse_pairs, read_config
from .data import (
    DatasetOnDisk,
    SyntheticSpec,
    dataset_fingerprint,
    generate_synthetic,
    load_dataset,
    spec_to_text,
    write_dataset,
    SPEC_FILE,
)
from .exceptions import ContractError, DivergenceError, ParseError
from .experiments import CSV_HEADER, bench, depth_sweep
from .model import forward, load_checkpoint
from .training import evaluate, make_splits, run_seeds, seed_streams

log = logging.getLogger("gnnmoe")

MANIFEST_FILE = "manifest.txt"
SUMMARY_FILE = "summary.json"


class UsageError(Exception):
    pass


def _fraction(text):
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is outside [0, 1]")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text} must be >= 1")
    return value


def _nonneg_float(text):
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"{text} must be >= 0")
    return value


def _depths(text):
    try:
        values = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad depth list {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("depths must be a nonempty list of positive integers")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gnnmoe", description="GNNMoE node classification")
    parser.add_argument("-v", "--verbose", action="store_true", help="log one JSON record per epoch")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="write a synthetic dataset")
    gen.add_argument("--nodes", type=_positive_int, default=1000)
    gen.add_argument("--classes", type=_positive_int, default=4)
    gen.add_argument("--dim", type=_positive_int, default=16)
    gen.add_argument("--homophily", type=_fraction, default=0.8)
    gen.add_argument("--degree", type=float, default=10.0)
    gen.add_argument("--noise", type=_nonneg_float, default=1.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--binary-features", action="store_true")
    gen.add_argument("--out", required=True)

    def add_run_args(p, needs_out=True):
        p.add_argument("--data", help="dataset directory (edges.tsv, features.csv, labels.txt)")
        p.add_argument("--edges")
        p.add_argument("--features")
        p.add_argument("--labels")
        p.add_argument("--splits")
        p.add_argument("--directed", action="store_true")
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override")
        p.add_argument("--out", required=needs_out)

    train = sub.add_parser("train", help="train over the configured seeds")
    add_run_args(train, needs_out=True)
    train.add_argument("--ablate", action="append", choices=["ffn", "residual"], default=[])
    train.add_argument("--jobs", type=_positive_int, default=1)
    train.add_argument("--manifest", help="replay a previous run manifest")

    ev = sub.add_parser("eval", help="score a saved checkpoint")
    add_run_args(ev, needs_out=False)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--seed", type=int, default=0, help="seed of the split to score")

    sweep = sub.add_parser("sweep-depth", help="accuracy against PT-block count")
    add_run_args(sweep, needs_out=False)
    sweep.add_argument("--depths", type=_depths, default=[2, 4, 8, 16])
    sweep.add_argument("--no-baseline", action="store_true")
    sweep.add_argument("--jobs", type=_positive_int, default=1)

    b = sub.add_parser("bench", help="epochs to early stop and training wall-clock")
    add_run_args(b, needs_out=False)
    return parser


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _dataset_spec(args) -> DatasetOnDisk:
    if args.data:
        spec = DatasetOnDisk.from_dir(args.data, undirected=not args.directed)
    elif args.edges and args.features and args.labels:
        spec = DatasetOnDisk(Path(args.edges), Path(args.features), Path(args.labels), None, not args.directed)
    else:
        raise UsageError("give --data DIR or all of --edges/--features/--labels")
    if args.edges:
        spec.edges = Path(args.edges)
    if args.features:
        spec.features = Path(args.features)
    if args.labels:
        spec.labels = Path(args.labels)
    if args.splits:
        spec.splits = Path(args.splits)
    return spec


def _resolve_configs(args, extra: dict = None):
    values = read_config(args.config) if args.config else {}
    values.update(extra or {})
    values.update(parse_overrides(args.set))
    return build_configs(values, args.config or "<command line>")


def variant_label(model_cfg) -> str:
    parts = []
    if model_cfg.ablate_ffn:
        parts.append("w/o FFN")
    if model_cfg.ablate_residual:
        parts.append("w/o AIR/AR")
    if model_cfg.force_expert:
        parts.append(f"forced-{model_cfg.force_expert}")
    return ", ".join(parts) if parts else "full"


def write_manifest(path: Path, spec: DatasetOnDisk, fingerprint: str, model_cfg, train_cfg, out_dir) -> None:
    lines = [
        "# gnnmoe run manifest",
        f"data.edges={Path(spec.edges).resolve()}",
        f"data.features={Path(spec.features).resolve()}",
        f"data.labels={Path(spec.labels).resolve()}",
        f"data.splits={Path(spec.splits).resolve() if spec.splits else 'none'}",
        f"data.undirected={'true' if spec.undirected else 'false'}",
        f"data.fingerprint={fingerprint}",
        f"out_dir={Path(out_dir).resolve()}",
        f"variant={variant_label(model_cfg)}",
    ]
    lines += [f"config.{line}" for line in format_config(model_cfg, train_cfg)]
    path.write_text("\n".join(lines) + "\n")


def read_manifest(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    raw, config_lines = {}, []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(path, lineno, f"expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        if key.startswith("config."):
            config_lines.append((lineno, f"{key[len('config.'):]}={value}"))
        else:
            raw[key] = value
    splits = raw.get("data.splits", "none")
    spec = DatasetOnDisk(
        Path(raw["data.edges"]), Path(raw["data.features"]), Path(raw["data.labels"]),
        None if splits == "none" else Path(splits), raw.get("data.undirected", "true") == "true",
    )
    model_cfg, train_cfg = build_configs(parse_pairs(config_lines, path), path)
    return spec, raw.get("data.fingerprint"), model_cfg, train_cfg


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    try:
        spec = SyntheticSpec(args.nodes, args.classes, args.dim, args.homophily, args.degree, args.noise, args.seed)
        g = generate_synthetic(spec)
    except ContractError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    write_dataset(g, out, binary_features=args.binary_features)
    (out / SPEC_FILE).write_text(spec_to_text(spec))
    print(f"wrote {g.num_nodes} nodes, {g.edge_pairs().shape[0]} edges to {out}")
    return 0


def cmd_train(args) -> int:
    if args.manifest:
        spec, fingerprint, model_cfg, train_cfg = read_manifest(args.manifest)
        current = dataset_fingerprint(spec)
        if fingerprint and current != fingerprint:
            raise ContractError(f"dataset content changed since {args.manifest} was written")
    else:
        spec = _dataset_spec(args)
        extra = {}
        if "ffn" in args.ablate:
            extra["ablate_ffn"] = True
        if "residual" in args.ablate:
            extra["ablate_residual"] = True
        model_cfg, train_cfg = _resolve_configs(args, extra)
    graph, splits = load_dataset(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fingerprint = dataset_fingerprint(spec)
    write_manifest(out / MANIFEST_FILE, spec, fingerprint, model_cfg, train_cfg, out)

    t0 = time.perf_counter()
    summary = run_seeds(model_cfg, train_cfg, graph, jobs=args.jobs, out_dir=out, splits=splits,
                        label=variant_label(model_cfg))
    record = {
        "variant": summary.label,
        "prop": model_cfg.prop,
        "num_blocks": model_cfg.num_blocks,
        "dataset_fingerprint": fingerprint,
        "seeds": list(train_cfg.seeds),
        **summary.metrics(),
        "wall_clock_seconds": time.perf_counter() - t0,
        "per_seed_seconds": [r.seconds for r in summary.results],
    }
    (out / SUMMARY_FILE).write_text(json.dumps(record, indent=2) + "\n")
    print(f"{summary.label}: test accuracy {summary.mean!r} +- {summary.std!r} over {len(train_cfg.seeds)} seeds")
    return 0


def cmd_eval(args) -> int:
    spec = _dataset_spec(args)
    model_cfg, train_cfg = _resolve_configs(args)
    graph, splits = load_dataset(spec)
    model = load_checkpoint(args.checkpoint, model_cfg, graph.num_features, graph.num_classes)
    if splits is None:
        split_seed, _, _ = seed_streams(args.seed)
        splits = make_splits(graph, train_cfg.fractions, split_seed)
    with ad.no_grad():
        logits = forward(model, graph, training=False)
    record = {name: evaluate(model, graph, idx, logits) for name, idx in zip(("train", "val", "test"), splits)}
    record["all"] = evaluate(model, graph, np.arange(graph.num_nodes), logits)
    text = json.dumps(record, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_sweep_depth(args) -> int:
    spec = _dataset_spec(args)
    model_cfg, train_cfg = _resolve_configs(args)
    graph, _ = load_dataset(spec)
    rows = depth_sweep(graph, args.depths, model_cfg, train_cfg, include_baseline=not args.no_baseline,
                       jobs=args.jobs)
    text = "\n".join([CSV_HEADER] + [r.csv() for r in rows]) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_bench(args) -> int:
    spec = _dataset_spec(args)
    model_cfg, train_cfg = _resolve_configs(args)
    graph, _ = load_dataset(spec)
    record = bench(graph, model_cfg, train_cfg).as_dict()
    record["max_epochs"] = train_cfg.max_epochs
    text = json.dumps(record, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep-depth": cmd_sweep_depth,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except (FileNotFoundError, ParseError, ContractError, DivergenceError, ValueError) as exc:
        print(f"gnnmoe {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
