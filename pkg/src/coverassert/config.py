"""Dataclass configs and the TOML loader.

Sections in the file: ``[clustering]``, ``[mapping]``, ``[loop]`` and
``[gateway]``. Every key is optional and falls back to the defaults below.
"""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ArgumentError


@dataclass(frozen=True)
class FusionConfig:
    tau_sem: float = 0.80
    delta_struct: Optional[float] = None  # None: median nonzero distance of the batch
    pca_variance_target: float = 0.95
    pca_max_k: int = 8
    alpha: float = 1.0
    # one-hot weight becomes alpha * RMS row norm of the reduced block
    alpha_relative: bool = True
    tau_fuse: float = 0.75
    seed: int = 0
    struct_path_weight: float = 1.0
    struct_lca_weight: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.tau_sem < 1.0:
            raise ArgumentError(f"tau_sem must lie in (0, 1), got {self.tau_sem}")
        if self.delta_struct is not None and self.delta_struct < 0:
            raise ArgumentError("delta_struct must be non-negative")
        if not 0.0 < self.pca_variance_target <= 1.0:
            raise ArgumentError("pca_variance_target must lie in (0, 1]")
        if self.pca_max_k < 1:
            raise ArgumentError("pca_max_k must be >= 1")
        if self.alpha < 0:
            raise ArgumentError("alpha must be non-negative")
        if self.struct_path_weight < 0 or self.struct_lca_weight < 0:
            raise ArgumentError("structural weights must be non-negative")


@dataclass(frozen=True)
class MappingConfig:
    w_sig: float = 0.5
    w_sem: float = 0.5
    tau_map: float = 0.60

    def __post_init__(self) -> None:
        if self.w_sig < 0 or self.w_sem < 0 or self.w_sig + self.w_sem <= 0:
            raise ArgumentError("mapping weights must be >= 0 with a positive sum")


@dataclass(frozen=True)
class LoopConfig:
    theta: float = 0.85
    max_rounds: int = 5
    generator_timeout_s: float = 600.0

    def __post_init__(self) -> None:
        if self.max_rounds < 0:
            raise ArgumentError("max_rounds must be >= 0")


@dataclass(frozen=True)
class GatewayConfig:
    backend: str = "stub"
    endpoint: str = ""
    api_key_env: str = "COVERASSERT_API_KEY"
    chat_model: str = ""
    embedding_model: str = ""
    d_sem: int = 64
    max_retries: int = 3
    backoff_initial_ms: float = 500.0
    backoff_multiplier: float = 2.0
    timeout_ms: float = 60000.0
    max_in_flight: int = 4
    cache_path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.backend not in ("stub", "http"):
            raise ArgumentError(f"unknown backend {self.backend!r}")
        if self.max_retries < 0:
            raise ArgumentError("max_retries must be >= 0")
        if self.d_sem < 8:
            raise ArgumentError("d_sem must be >= 8")
        if self.max_in_flight < 1:
            raise ArgumentError("max_in_flight must be >= 1")


@dataclass(frozen=True)
class Config:
    clustering: FusionConfig = field(default_factory=FusionConfig)
    mapping: MappingConfig = field(default_factory=MappingConfig)
    loop: LoopConfig = field(default_factory=LoopConfig)
    gateway: GatewayConfig = field(default_factory=GatewayConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **sections) -> "Config":
        return dataclasses.replace(self, **sections)


_SECTIONS = {"clustering": FusionConfig, "mapping": MappingConfig, "loop": LoopConfig, "gateway": GatewayConfig}


def config_from_dict(data: dict) -> Config:
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = data.get(name, {}) or {}
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(section) - known
        if unknown:
            raise ArgumentError(f"unknown keys in [{name}]: {', '.join(sorted(unknown))}")
        kwargs[name] = cls(**section)
    extra = set(data) - set(_SECTIONS)
    if extra:
        raise ArgumentError(f"unknown config sections: {', '.join(sorted(extra))}")
    return Config(**kwargs)


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    with open(path, "rb") as fh:
        return config_from_dict(tomllib.load(fh))
