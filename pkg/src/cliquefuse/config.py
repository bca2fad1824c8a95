"""Pipeline configuration: defaults, file loading, validation.

The config file is a single JSON document; every key also has a CLI override.
Defaults follow the reference operating point: 2 key frames, clips of 3,
edge threshold 0.5, vote threshold 0.2, minimum area 10 pixels.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .propagation import PropagatorSpec


class ConfigError(ValueError):
    """Invalid configuration; maps to exit code 2 at the CLI."""


@dataclass(frozen=True)
class PipelineConfig:
    keyframes: int = 2
    clip_size: int = 3
    t0: float = 0.5
    t1: float = 0.2
    min_area: int = 10
    nms_threshold: float = 0.5
    vote_divisor: str = "H"
    propagator: PropagatorSpec = field(default_factory=lambda: PropagatorSpec("identity"))
    top_m: int | None = None
    seed: int = 0
    worker_count: int = 1
    mpgraph: bool = True

    def __post_init__(self):
        if self.keyframes < 1:
            raise ConfigError(f"keyframes must be >= 1, got {self.keyframes}")
        if self.clip_size < 1 or self.clip_size % 2 == 0:
            raise ConfigError(f"clip_size must be odd and >= 1, got {self.clip_size}")
        for name in ("t0", "t1", "nms_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        if self.min_area < 0:
            raise ConfigError(f"min_area must be >= 0, got {self.min_area}")
        if self.vote_divisor not in ("H", "n"):
            raise ConfigError(f"vote_divisor must be 'H' or 'n', got {self.vote_divisor!r}")
        if self.top_m is not None and self.top_m < 0:
            raise ConfigError(f"top_m must be >= 0, got {self.top_m}")
        if self.worker_count < 1:
            raise ConfigError(f"worker_count must be >= 1, got {self.worker_count}")

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"config must be a JSON object, got {type(data).__name__}")
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        kwargs = dict(data)
        if "propagator" in kwargs:
            if not isinstance(kwargs["propagator"], dict):
                raise ConfigError("propagator must be an object")
            try:
                kwargs["propagator"] = PropagatorSpec.from_dict(kwargs["propagator"])
            except ValueError as exc:
                raise ConfigError(f"bad propagator: {exc}") from exc
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path: str) -> "PipelineConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["propagator"] = {
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in dataclasses.asdict(self.propagator).items()
            if v not in (None, ())
        }
        return data
