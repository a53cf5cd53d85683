"""Experiment configuration: nested dataclasses read from and written to YAML.

Every field has a default, so an empty file (or no file) reproduces the
Hill-feedback, burst-size-scaling experiments with ``gamma1`` in
``{0.1, 1, 10, 100}``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .errors import ConfigError
from .model import (
    ConstantRate,
    ExponentialJumps,
    HillRate,
    Model,
    ModelParams,
    ScalingFamily,
    TabulatedJumps,
    TabulatedRate,
)

__all__ = [
    "RateConfig",
    "JumpConfig",
    "ModelConfig",
    "SimulationConfig",
    "SamplingConfig",
    "DensityConfig",
    "MomentsConfig",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "render_config",
    "config_hash",
]


@dataclass
class RateConfig:
    kind: str = "hill"
    phi0: float = 5.0
    K: float = 1.0
    A: float = 4.0
    B: float = 1.0
    n: float = 4.0
    y0: float = 0.0
    dy: float = 1.0
    values: list = field(default_factory=list)
    lower_bound: Optional[float] = None
    upper_bound: Optional[float] = None

    def build(self):
        if self.kind == "hill":
            return HillRate(self.phi0, self.K, self.A, self.B, self.n)
        if self.kind == "constant":
            return ConstantRate(self.phi0)
        if self.kind == "tabulated":
            if self.lower_bound is None or self.upper_bound is None:
                raise ConfigError("tabulated rates need lower_bound and upper_bound", field="model.rate")
            return TabulatedRate(self.y0, self.dy, self.values, self.lower_bound, self.upper_bound)
        raise ConfigError(f"unknown rate kind {self.kind!r}", field="model.rate.kind")


@dataclass
class JumpConfig:
    kind: str = "exponential"
    mean: float = 0.5
    x0: float = 0.0
    dx: float = 1.0
    values: list = field(default_factory=list)

    def build(self):
        if self.kind == "exponential":
            return ExponentialJumps(self.mean)
        if self.kind == "tabulated":
            return TabulatedJumps(self.x0, self.dx, self.values)
        raise ConfigError(f"unknown jump kind {self.kind!r}", field="model.jumps.kind")


@dataclass
class ModelConfig:
    """Base model at ``gamma1``; scaled copies are made for other ``gamma1`` values."""

    gamma1: float = 1.0
    gamma2: float = 1.0
    lambda2: float = 2.0
    rate: RateConfig = field(default_factory=RateConfig)
    jumps: JumpConfig = field(default_factory=JumpConfig)

    def build(self) -> Model:
        return Model(ModelParams(self.gamma1, self.gamma2, self.lambda2), self.rate.build(), self.jumps.build())


@dataclass
class SimulationConfig:
    horizon: float = 50.0
    n_replicas: int = 1
    obs_interval: Optional[float] = 0.1
    x0: float = 0.0
    y0: float = 0.0
    record_jumps: bool = True


@dataclass
class SamplingConfig:
    n_samples: int = 1_000_000
    burn_in: Optional[float] = None
    window: Optional[float] = None
    n_streams: int = 1
    x0: float = 0.0
    y0: float = 0.0


@dataclass
class DensityConfig:
    n_bins: int = 200
    y_max: Optional[float] = None
    tail: float = 1e-6
    x_quantile: float = 0.999
    pde_cells: int = 600
    pde_horizon: float = 10.0


@dataclass
class MomentsConfig:
    order: int = 2
    t: Optional[float] = None
    n_replicas: int = 100_000
    n_streams: int = 16


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    scaling: str = "S2"
    gamma1_grid: list = field(default_factory=lambda: [0.1, 1.0, 10.0, 100.0])
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    density: DensityConfig = field(default_factory=DensityConfig)
    moments: MomentsConfig = field(default_factory=MomentsConfig)
    seed: int = 20130131
    threads: Optional[int] = None
    output_dir: str = "out"

    def family(self) -> ScalingFamily:
        return ScalingFamily(self.scaling, self.model.build(), gamma1_ref=self.model.gamma1)

    def validate(self) -> "ExperimentConfig":
        """Build every derived object once so errors surface with their field path."""
        m = self.model
        parts = (
            ("model", lambda: ModelParams(m.gamma1, m.gamma2, m.lambda2)),
            ("model.rate", m.rate.build),
            ("model.jumps", m.jumps.build),
            ("", self.family),
        )
        for prefix, build in parts:
            try:
                build()
            except ConfigError as exc:
                if prefix and exc.field and not exc.field.startswith(prefix):
                    raise ConfigError(str(exc).split(": ", 1)[-1], field=f"{prefix}.{exc.field}") from None
                if not prefix and exc.field == "tag":
                    raise ConfigError(str(exc).split(": ", 1)[-1], field="scaling") from None
                raise
        if not self.gamma1_grid:
            raise ConfigError("must not be empty", field="gamma1_grid")
        for i, g in enumerate(self.gamma1_grid):
            if not (isinstance(g, (int, float)) and g > 0):
                raise ConfigError(f"entries must be positive numbers, got {g!r}", field=f"gamma1_grid[{i}]")
        checks = [
            ("simulation.horizon", self.simulation.horizon >= 0),
            ("simulation.n_replicas", self.simulation.n_replicas >= 1),
            ("simulation.obs_interval", self.simulation.obs_interval is None or self.simulation.obs_interval > 0),
            ("sampling.n_samples", self.sampling.n_samples >= 1),
            ("sampling.window", self.sampling.window is None or self.sampling.window > 0),
            ("sampling.burn_in", self.sampling.burn_in is None or self.sampling.burn_in >= 0),
            ("sampling.n_streams", self.sampling.n_streams >= 1),
            ("density.n_bins", self.density.n_bins >= 1),
            ("density.y_max", self.density.y_max is None or self.density.y_max > 0),
            ("density.tail", 0 < self.density.tail < 1),
            ("density.x_quantile", 0 < self.density.x_quantile <= 1),
            ("density.pde_cells", self.density.pde_cells >= 2),
            ("density.pde_horizon", self.density.pde_horizon >= 0),
            ("moments.order", self.moments.order >= 1),
            ("moments.n_replicas", self.moments.n_replicas >= 2),
            ("moments.n_streams", self.moments.n_streams >= 1),
            ("seed", isinstance(self.seed, int) and 0 <= self.seed < 2**64),
            ("threads", self.threads is None or self.threads >= 1),
        ]
        for path, ok in checks:
            if not ok:
                raise ConfigError("invalid value", field=path)
        return self


_NESTED = {
    ExperimentConfig: {
        "model": ModelConfig,
        "simulation": SimulationConfig,
        "sampling": SamplingConfig,
        "density": DensityConfig,
        "moments": MomentsConfig,
    },
    ModelConfig: {"rate": RateConfig, "jumps": JumpConfig},
}

_FLOAT_OK = (int, float)


def _coerce(cls, name, value, path):
    ftype = {f.name: f.type for f in dataclasses.fields(cls)}[name]
    if value is None:
        if "Optional" in str(ftype):
            return None
        raise ConfigError("must not be null", field=path)
    if ftype in ("float", "Optional[float]"):
        if isinstance(value, bool) or not isinstance(value, _FLOAT_OK):
            raise ConfigError(f"expected a number, got {value!r}", field=path)
        return float(value)
    if ftype in ("int", "Optional[int]"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", field=path)
        return value
    if ftype == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", field=path)
        return value
    if ftype == "str":
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", field=path)
        return value
    if ftype == "list":
        if not isinstance(value, list):
            raise ConfigError(f"expected a list, got {value!r}", field=path)
        return [float(v) if isinstance(v, _FLOAT_OK) and not isinstance(v, bool) else v for v in value]
    return value


def _from_dict(cls, data, prefix=""):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("expected a mapping", field=prefix.rstrip(".") or "<root>")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError("unknown key", field=f"{prefix}{key}")
    nested = _NESTED.get(cls, {})
    kwargs = {}
    for name, value in data.items():
        path = f"{prefix}{name}"
        if name in nested:
            kwargs[name] = _from_dict(nested[name], value, path + ".")
        else:
            kwargs[name] = _coerce(cls, name, value, path)
    return cls(**kwargs)


def parse_config(data: Any) -> ExperimentConfig:
    """Build a validated config from a mapping; a run manifest is accepted too."""
    if isinstance(data, dict) and "config" in data and "config_hash" in data:
        data = data["config"]
    return _from_dict(ExperimentConfig, data).validate()


def load_config(path: Optional[str | Path]) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig().validate()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", field="--config") from None
    try:
        # YAML 1.1 reads exponent floats such as 1e-06 as strings, so JSON manifests go through json
        data = json.loads(text) if text.lstrip().startswith("{") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config: {exc}", field="--config") from None
    return parse_config(data)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def render_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the result-determining part of the config (output_dir and threads excluded)."""
    data = config_to_dict(cfg)
    data.pop("output_dir")
    data.pop("threads")
    blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()

