"""Pipeline configuration: one JSON document drives every command.

Parsing is strict: unknown keys are rejected, JSON lists are round-tripped
into the tuple-valued fields, and the schema version is checked. The
canonical serialized form (sorted keys, full-precision floats) feeds the
config hash embedded in every output artifact.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .decomp import LossWeights
from .pseudolabel import LabelConfig
from .solver import SolverConfig
from .synthgen import GeneratorConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Malformed or inconsistent pipeline configuration."""


@dataclass(frozen=True)
class PipelineConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    jobs: int = 1
    dataset_root: str | None = None
    output_root: str | None = None
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    pseudolabel: LabelConfig = field(default_factory=LabelConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}, expected {SCHEMA_VERSION}")
        if self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.solver.loss_weights != self.loss_weights:
            # The top-level weights are authoritative; keep the solver in sync.
            object.__setattr__(self, "solver", dataclasses.replace(self.solver, loss_weights=self.loss_weights))


# Dataclass-valued fields that need recursive construction from JSON objects.
_CHILD_TYPES: dict[type, dict[str, type]] = {
    SolverConfig: {"loss_weights": LossWeights},
}


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def _build(cls: type, payload, where: str):
    if not isinstance(payload, dict):
        raise ConfigError(f"{where}: expected an object, got {type(payload).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in payload.items():
        child = _CHILD_TYPES.get(cls, {}).get(name)
        if child is not None:
            kwargs[name] = _build(child, value, f"{where}.{name}")
        else:
            kwargs[name] = _tuplify(value)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_SECTIONS = {
    "generator": GeneratorConfig,
    "pseudolabel": LabelConfig,
    "solver": SolverConfig,
    "loss_weights": LossWeights,
}


def from_dict(payload: dict) -> PipelineConfig:
    if not isinstance(payload, dict):
        raise ConfigError("pipeline config must be a JSON object")
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    kwargs = {}
    for name, value in payload.items():
        if name in _SECTIONS:
            kwargs[name] = _build(_SECTIONS[name], value, name)
        else:
            kwargs[name] = value
    try:
        return PipelineConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load(path: str | Path) -> PipelineConfig:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return from_dict(payload)


def to_dict(cfg: PipelineConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_hash(cfg: PipelineConfig) -> str:
    """Content digest of the canonical JSON form (first 16 hex chars of SHA-256)."""
    canonical = json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]
