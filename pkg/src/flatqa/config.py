"""Flat pipeline configuration: one YAML mapping, strict keys, typed values,
overridable from the command line with key=value pairs (flags win)."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import yaml


@dataclass
class PipelineConfig:
    kb_path: str = ""
    tables_path: str = ""
    text_path: str = ""
    questions_path: str = ""
    linking_path: str = ""
    output_dir: str = "out"
    token_limit: int = 100
    k_total: int = 100
    kb_quota: int = 10
    kb_k_relations: int = 100
    table_mode: str = "simple"
    embedder: str = "stub"
    embed_endpoint: str = ""
    embed_dim: int = 128
    reader: str = "baseline"
    reader_endpoint: str = ""
    bm25_k1: float = 0.9
    bm25_b: float = 0.4
    negatives_per_q: int = 1
    mining_rounds: int = 2
    candidate_depth: int = 100
    read_contexts: int = 20
    seed: int = 0

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}


def _coerce(key: str, value) -> object:
    kind = _FIELD_TYPES[key]
    try:
        if kind in ("int", int):
            if isinstance(value, bool):
                raise ValueError("boolean is not an int")
            return int(value)
        if kind in ("float", float):
            if isinstance(value, bool):
                raise ValueError("boolean is not a float")
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"config key {key!r}: cannot interpret {value!r} "
                         f"as {kind}") from exc


def load_config(path: str | Path) -> PipelineConfig:
    """Strict load: the file must be a flat mapping of known keys."""
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a mapping, got {type(raw).__name__}")
    unknown = sorted(set(raw) - set(_FIELD_TYPES))
    if unknown:
        raise ValueError(f"{path}: unknown config keys: {', '.join(unknown)}")
    values = {key: _coerce(key, value) for key, value in raw.items()}
    return PipelineConfig(**values)


def apply_overrides(config: PipelineConfig, pairs: list[str]) -> PipelineConfig:
    """Apply key=value overrides (as from repeated --set flags)."""
    updates = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep:
            raise ValueError(f"override {pair!r} is not of the form key=value")
        if key not in _FIELD_TYPES:
            raise ValueError(f"unknown config key {key!r}")
        updates[key] = _coerce(key, value)
    return dataclasses.replace(config, **updates)
