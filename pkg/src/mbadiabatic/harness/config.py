"""Experiment configuration: strict TOML documents validated by pydantic."""

from __future__ import annotations

import sys
from pathlib import Path
from typing import Literal

import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..cd_expansion import DEFAULT_MAX_ORDER
from ..errors import ConfigError
from ..operators import DEFAULT_SITE_CAP

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

KINDS = (
    "order-residuals",
    "qa-generator",
    "adiabatic-scaling",
    "dressed-scaling",
    "driving-order",
    "kubo",
    "orthogonality",
    "tfim-sweep",
    "correlation-length",
    "consistency",
    "growth",
)

Kind = Literal[
    "order-residuals",
    "qa-generator",
    "adiabatic-scaling",
    "dressed-scaling",
    "driving-order",
    "kubo",
    "orthogonality",
    "tfim-sweep",
    "correlation-length",
    "consistency",
    "growth",
]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSpec(_Strict):
    family: Literal["tfim", "single-spin"] = "tfim"
    length: int = Field(8, ge=1, le=DEFAULT_SITE_CAP)
    lengths: list[int] = Field(default_factory=list)
    field_start: float = 2.5
    field_stop: float = 1.5
    coupling: float = 1.0
    longitudinal: float = 0.3
    boundary: Literal["periodic", "open"] = "periodic"
    angle_start: float = 0.0
    angle_stop: float = 1.0

    @field_validator("lengths")
    @classmethod
    def _lengths_capped(cls, v):
        for L in v:
            if not 1 <= L <= DEFAULT_SITE_CAP:
                raise ValueError(f"length {L} outside [1, {DEFAULT_SITE_CAP}]")
        return v


class GridSpec(_Strict):
    points: int = Field(401, ge=7)
    output_points: int = Field(41, ge=2)
    s_eval: float = Field(0.5, gt=0.0, le=1.0)


class Tolerances(_Strict):
    residual: float = 1e-8
    qa_residual: float = 1e-9
    slope: float = 0.15
    volume_constant: float = 0.25
    dressed_min_slope: float = 1.8
    kubo_min_slope: float = 0.8
    second_order_spread: float = 0.5
    volume_response: float = 5e-2
    local_error: float = 1e-12
    exponent_rel: float = 0.1
    prefactor_factor: float = 2.0
    xi_ratio: float = 0.2
    gap_match: float = 1e-8
    backend_match: float = 1e-4
    integrator: float = 1e-9


class TfimSpec(_Strict):
    h0: float = Field(1.5, gt=1.0)
    length: int = Field(4096, ge=8)
    protocol: Literal["hyperbolic", "quadratic"] = "hyperbolic"
    h_max: float = 10.0
    eps_pair: tuple[float, float] = (2.0, 0.5)


class ExperimentConfig(_Strict):
    kind: Kind
    model: ModelSpec = ModelSpec()
    eps: list[float] = Field(default_factory=lambda: [0.04, 0.056, 0.08, 0.113, 0.16])
    order: int = Field(3, ge=1, le=DEFAULT_MAX_ORDER + 2)
    orders: list[int] = Field(default_factory=list)
    grid: GridSpec = GridSpec()
    tolerances: Tolerances = Tolerances()
    tfim: TfimSpec = TfimSpec()
    volumes: list[int] = Field(default_factory=lambda: [10, 100, 1000])
    backend: Literal["spectral", "quadrature"] = "spectral"
    output_dir: str | None = None
    seed: int = 0

    @field_validator("eps")
    @classmethod
    def _eps_range(cls, v):
        if not v:
            raise ValueError("eps list is empty")
        for e in v:
            if not 0 < e <= 2.0:
                raise ValueError(f"eps {e} outside (0, 2]")
        return v

    @model_validator(mode="after")
    def _orders_capped(self):
        for n in self.orders:
            if not 1 <= n <= DEFAULT_MAX_ORDER + 2:
                raise ValueError(f"order {n} outside [1, {DEFAULT_MAX_ORDER + 2}]")
        return self


def _fields_of(err: ValidationError) -> list[str]:
    return [".".join(str(x) for x in e["loc"]) for e in err.errors()]


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        fields = _fields_of(exc)
        raise ConfigError(f"invalid configuration in field(s) {', '.join(fields)}: {exc}", fields) from None


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return parse_config(data)


def dump_config(cfg: ExperimentConfig) -> str:
    data = cfg.model_dump(mode="json", exclude_none=True)
    return tomli_w.dumps(data)


def loads_config(text: str) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return parse_config(data)
