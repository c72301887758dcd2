"""Pipeline configuration."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .basis import BasisError, BasisSpec, TimeDomain
from .synth import SCENARIOS
from .variogram import FAMILIES

OUTPUT_DIR_ENV = "STFREG_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    climate_path: str | None = None
    response_path: str | None = None
    t_min: float = 0.0
    t_max: float = 15.0
    grid_step: float = 0.1
    bases: list[str] = field(default_factory=lambda: ["fourier:2", "fourier:3", "fourier:4", "fourier:5"])
    variogram_families: list[str] = field(default_factory=lambda: ["exponential"])
    n_neighbors: int = 20
    qgls_iterations: int = 1
    n_bins: int = 15
    cv_mode: str = "honest"
    class_edges: list[float] = field(default_factory=lambda: [0.24, 0.26, 0.28])
    output_dir: str = "results"
    seed: int = 0
    scenario: str = "M1_known_ABC"
    n_response_sites: int = 389
    n_climate_sites: int = 216

    @property
    def domain(self) -> TimeDomain:
        return TimeDomain(self.t_min, self.t_max)

    def basis_specs(self) -> list[BasisSpec]:
        return [BasisSpec.parse(b, self.domain) for b in self.bases]

    def validate(self, run_mode: bool = False) -> "PipelineConfig":
        try:
            self.domain
            self.basis_specs()
        except BasisError as exc:
            raise ConfigError(str(exc)) from None
        if self.grid_step <= 0:
            raise ConfigError("grid_step must be positive")
        if not self.bases or not self.variogram_families:
            raise ConfigError("bases and variogram_families must be nonempty")
        bad = [f for f in self.variogram_families if f not in FAMILIES]
        if bad:
            raise ConfigError(f"unknown variogram families {bad}; choose from {FAMILIES}")
        if self.n_neighbors < 1 or self.qgls_iterations < 1 or self.n_bins < 3:
            raise ConfigError("n_neighbors and qgls_iterations must be >= 1, n_bins >= 3")
        if self.cv_mode not in ("honest", "fast"):
            raise ConfigError("cv_mode must be 'honest' or 'fast'")
        if not self.class_edges or any(b <= a for a, b in zip(self.class_edges, self.class_edges[1:])):
            raise ConfigError("class_edges must be nonempty and strictly ascending")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if run_mode:
            for name in ("climate_path", "response_path"):
                if not getattr(self, name):
                    raise ConfigError(f"{name} is required")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form, excluding the output directory."""
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


_FIELD_TYPES = {f.name: f for f in fields(PipelineConfig)}


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Config file (JSON), then the output-directory environment variable, then ``overrides``.

    Relative input paths in the file are resolved against the file's directory.
    """
    data: dict = {}
    if path is not None:
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        for key in ("climate_path", "response_path"):
            if data.get(key) and not Path(data[key]).is_absolute():
                data[key] = str((path.parent / data[key]).resolve())
    env_out = os.environ.get(OUTPUT_DIR_ENV)
    if env_out:
        data["output_dir"] = env_out
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = sorted(set(data) - set(_FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown config fields {unknown}")
    try:
        cfg = PipelineConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()
