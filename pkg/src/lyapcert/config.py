"""Run configuration: a single JSON document validated with pydantic, plus
cross-field rules reported with dotted field paths."""

from __future__ import annotations

import json
from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError


class ConfigError(ValueError):
    """Invalid configuration; carries the offending field path."""

    def __init__(self, field_path, message):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


class SystemConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    builtin: Optional[str] = None
    params: dict = Field(default_factory=dict)
    dimension: Optional[int] = None
    f: Optional[list[str]] = None
    V: Optional[str] = None


class DomainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    c1: float
    c2: float


class GuasConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    k0: float
    k1: float
    k2: float
    ladder: Optional[list[float]] = None
    kappa: float = 1.0
    delta: float = 0.5


class GridConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    resolution: int = 801
    refinement: int = 2
    box: Optional[list[list[float]]] = None


class IntegratorSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")
    dt: Optional[float] = None
    t_max: float = 20.0
    event_tolerance: float = 1e-10


class SamplerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    count: int = 20
    level: float
    seed: int = 0


class OutputsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    report_path: Optional[str] = None
    csv_dir: Optional[str] = None
    plot_dir: Optional[str] = None


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    system: SystemConfig
    domain: Optional[DomainConfig] = None
    guas: Optional[GuasConfig] = None
    rate_a: float
    eta: Union[str, float] = "auto"
    grid: GridConfig = Field(default_factory=GridConfig)
    integrator: IntegratorSettings = Field(default_factory=IntegratorSettings)
    initial_conditions: Optional[Union[list[list[float]], SamplerConfig]] = None
    outputs: OutputsConfig = Field(default_factory=OutputsConfig)
    mc_seed: int = 0


def _cross_validate(cfg: RunConfig):
    if (cfg.domain is None) == (cfg.guas is None):
        raise ConfigError("domain", "exactly one of 'domain' and 'guas' must be present")
    sys = cfg.system
    has_builtin = sys.builtin is not None
    has_expr = sys.f is not None or sys.V is not None or sys.dimension is not None
    if has_builtin == has_expr:
        raise ConfigError(
            "system.builtin",
            "specify either a builtin name or an expression block, not both",
        )
    if has_expr:
        for name in ("dimension", "f", "V"):
            if getattr(sys, name) is None:
                raise ConfigError(f"system.{name}", "required in an expression block")
        if len(sys.f) != sys.dimension:
            raise ConfigError("system.f", "one expression per state dimension required")
    if cfg.domain is not None:
        if cfg.domain.c1 <= 0:
            raise ConfigError("domain.c1", "c1 must be positive")
        if cfg.domain.c1 >= cfg.domain.c2:
            raise ConfigError("domain.c1", "c1 must be below c2")
    if cfg.guas is not None:
        for name in ("k0", "k1", "k2"):
            if getattr(cfg.guas, name) <= 0:
                raise ConfigError(f"guas.{name}", "must be positive")
        if cfg.guas.kappa <= 0 or cfg.guas.delta <= 0:
            raise ConfigError("guas.kappa", "kappa and delta must be positive")
    if cfg.rate_a <= 0:
        raise ConfigError("rate_a", "decay rate must be positive")
    if isinstance(cfg.eta, float) and not 0.0 < cfg.eta < 1.0:
        raise ConfigError("eta", "fixed eta must lie in (0, 1)")
    if isinstance(cfg.eta, str) and cfg.eta != "auto":
        try:
            val = float(cfg.eta)
        except ValueError:
            raise ConfigError("eta", "must be 'auto' or a number in (0, 1)")
        if not 0.0 < val < 1.0:
            raise ConfigError("eta", "fixed eta must lie in (0, 1)")
    if cfg.grid.resolution < 3:
        raise ConfigError("grid.resolution", "resolution must be at least 3")
    it = cfg.integrator
    if it.dt is not None and it.dt <= 0:
        raise ConfigError("integrator.dt", "dt must be positive")
    if it.t_max <= 0:
        raise ConfigError("integrator.t_max", "t_max must be positive")
    if isinstance(cfg.initial_conditions, SamplerConfig):
        if cfg.initial_conditions.count <= 0:
            raise ConfigError("initial_conditions.count", "count must be positive")
        if cfg.initial_conditions.level <= 0:
            raise ConfigError("initial_conditions.level", "level must be positive")


def load_config(data) -> RunConfig:
    """Validate a parsed JSON document (or a path's contents) into a RunConfig."""
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        raise ConfigError(path, err["msg"]) from exc
    _cross_validate(cfg)
    return cfg


def load_config_file(path) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("<config>", f"file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError("<config>", f"invalid JSON: {exc}")
    return load_config(data)


def eta_strategy(cfg: RunConfig) -> str:
    if cfg.eta == "auto":
        return "auto"
    return f"fixed:{float(cfg.eta)}"
