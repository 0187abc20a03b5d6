"""Flat ``key=value`` run configuration."""

from __future__ import annotations

from dataclasses import asdict, fields
from pathlib import Path

from .exceptions import ContractError, ParseError
from .model import GnnMoeConfig
from .training import TrainConfig

MODEL_FIELDS = {f.name: f for f in fields(GnnMoeConfig)}
TRAIN_FIELDS = {f.name: f for f in fields(TrainConfig)}


def _convert(key: str, raw: str):
    field = MODEL_FIELDS.get(key) or TRAIN_FIELDS.get(key)
    default = field.default
    text = raw.strip()
    if key in ("seeds", "fractions"):
        if key == "seeds" and text.startswith("range:"):
            return tuple(range(int(text.split(":", 1)[1])))
        cast = int if key == "seeds" else float
        return tuple(cast(tok) for tok in text.split(",") if tok.strip())
    if key == "force_expert":
        return None if text.lower() in ("", "none") else text
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def parse_pairs(lines, source) -> dict:
    """Parse ``key=value`` lines; ``source`` names the origin in error messages."""
    out = {}
    for lineno, line in lines:
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if "=" not in text:
            raise ParseError(source, lineno, f"expected key=value, got {text!r}")
        key, value = (part.strip() for part in text.split("=", 1))
        if key not in MODEL_FIELDS and key not in TRAIN_FIELDS:
            raise ParseError(source, lineno, f"unknown config key {key!r}")
        try:
            out[key] = _convert(key, value)
        except ValueError as exc:
            raise ParseError(source, lineno, f"bad value for {key!r}: {exc}") from None
    return out


def read_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_pairs(enumerate(path.read_text().splitlines(), start=1), path)


def parse_overrides(pairs) -> dict:
    return parse_pairs(((None, p) for p in pairs), "<command line>")


def build_configs(values: dict, source="<config>") -> tuple[GnnMoeConfig, TrainConfig]:
    model_kw = {k: v for k, v in values.items() if k in MODEL_FIELDS}
    train_kw = {k: v for k, v in values.items() if k in TRAIN_FIELDS}
    try:
        return GnnMoeConfig(**model_kw), TrainConfig(**train_kw)
    except ContractError as exc:
        raise ParseError(source, None, str(exc)) from None


def format_config(model_cfg: GnnMoeConfig, train_cfg: TrainConfig) -> list[str]:
    lines = []
    for key, value in {**asdict(model_cfg), **asdict(train_cfg)}.items():
        if isinstance(value, tuple):
            value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        elif isinstance(value, float):
            value = repr(value)
        elif value is None:
            value = "none"
        lines.append(f"{key}={value}")
    return lines
