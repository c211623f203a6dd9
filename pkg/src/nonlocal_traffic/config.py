"""JSON experiment configuration.

A config file holds a ``version`` field, a list of run specs and the
optional sections used by ``converge`` and ``compare``.  Catalog names
(velocity, kernel and datum families) are resolved here so that a bad
name is a validation error rather than a solver failure.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import models
from .errors import ConfigError
from .grid import GridSpec
from .solver import SolverConfig

CONFIG_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class VelocityConfig(_Strict):
    family: Literal["greenshields", "linear", "quadratic", "convex", "polynomial"] = "quadratic"
    k: int = 2
    v_max: float = 1.0
    q_max: float = 1.0
    coefficients: Optional[List[float]] = None

    def build(self) -> models.VelocityModel:
        if self.family == "greenshields":
            return models.greenshields(self.k, self.v_max, self.q_max)
        if self.family == "linear":
            return models.linear_velocity(self.v_max, self.q_max)
        if self.family == "quadratic":
            return models.quadratic_velocity(self.v_max, self.q_max)
        if self.family == "convex":
            return models.convex_velocity()
        if not self.coefficients:
            raise ValueError("polynomial velocity needs coefficients")
        return models.polynomial_velocity(self.coefficients, self.q_max)


class KernelConfig(_Strict):
    family: Literal["exponential", "constant", "tabulated"] = "exponential"
    eta: float = Field(0.01, gt=0)
    knots: Optional[List[float]] = None
    values: Optional[List[float]] = None

    def build(self) -> models.KernelSpec:
        if self.family == "exponential":
            return models.exponential_kernel(self.eta)
        if self.family == "constant":
            return models.constant_kernel(self.eta)
        if not self.knots or not self.values:
            raise ValueError("tabulated kernel needs knots and values")
        return models.tabulated_kernel(self.eta, self.knots, self.values)


class DatumConfig(_Strict):
    family: Literal["constant", "box", "riemann", "ramp", "piecewise_constant"] = "box"
    value: float = 0.5
    base: float = 0.25
    height: float = 0.5
    a: float = -0.5
    b: float = 0.5
    q_l: float = 0.25
    q_r: float = 0.75
    x0: float = 0.0
    breakpoints: Optional[List[float]] = None
    values: Optional[List[float]] = None

    def build(self) -> models.InitialDatum:
        f = self.family
        if f == "constant":
            return models.constant_datum(self.value)
        if f == "box":
            return models.box_datum(self.base, self.height, self.a, self.b)
        if f == "riemann":
            return models.riemann_datum(self.q_l, self.q_r, self.x0)
        if f == "ramp":
            return models.ramp_datum(self.q_l, self.q_r, self.a, self.b)
        if self.breakpoints is None or self.values is None:
            raise ValueError("piecewise_constant datum needs breakpoints and values")
        return models.piecewise_constant_datum(self.breakpoints, self.values)


class GridConfig(_Strict):
    x_min: float = -2.0
    x_max: float = 2.0
    n_cells: int = Field(2000, ge=1)

    def build(self) -> GridSpec:
        return GridSpec(self.x_min, self.x_max, self.n_cells)


class RunSpec(_Strict):
    label: str
    variant: Literal["nonlocal_velocity", "nonlocal_solution", "local"] = "nonlocal_velocity"
    velocity: VelocityConfig = VelocityConfig()
    kernel: Optional[KernelConfig] = None
    datum: DatumConfig = DatumConfig()
    grid: GridConfig = GridConfig()
    cfl: float = 0.5
    t_end: float = Field(0.5, gt=0)
    snapshot_times: Optional[List[float]] = None
    # evenly spaced snapshots when snapshot_times is not given
    n_snapshots: int = Field(50, ge=1)

    @field_validator("velocity", mode="before")
    @classmethod
    def _velocity_name(cls, v):
        return {"family": v} if isinstance(v, str) else v

    @field_validator("cfl")
    @classmethod
    def _cfl_range(cls, v):
        if not 0.0 < v <= 0.5:
            raise ValueError(f"cfl must lie in (0, 0.5], got {v}")
        return v

    @field_validator("label")
    @classmethod
    def _label_is_path_safe(cls, v):
        if not v or "/" in v or "\\" in v or v in (".", ".."):
            raise ValueError(f"label {v!r} is not usable as a directory name")
        return v

    @model_validator(mode="after")
    def _kernel_present(self):
        if self.variant != "local" and self.kernel is None:
            raise ValueError(f"run {self.label!r}: variant {self.variant} needs a kernel")
        if self.snapshot_times is not None and any(not 0 <= t <= self.t_end for t in self.snapshot_times):
            raise ValueError(f"run {self.label!r}: snapshot times must lie in [0, t_end]")
        return self

    def times(self, extra: Tuple[float, ...] = ()) -> Tuple[float, ...]:
        if self.snapshot_times is not None:
            ts = list(self.snapshot_times)
        else:
            ts = np.linspace(0.0, self.t_end, self.n_snapshots + 1).tolist()
        return tuple(sorted({*ts, *extra}))

    def solver_config(self, extra_times: Tuple[float, ...] = ()) -> SolverConfig:
        return SolverConfig(
            variant=self.variant,
            velocity=self.velocity.build(),
            grid=self.grid.build(),
            t_end=self.t_end,
            kernel=self.kernel.build() if self.kernel is not None else None,
            cfl=self.cfl,
            snapshot_times=self.times(extra_times),
        )


class DiagnosticsToggles(_Strict):
    max_principle: bool = True
    tv: bool = True
    monotonicity: bool = False
    oleinik: Optional[Literal["upper", "lower"]] = None
    entropy: bool = False
    # per-step statistics instead of snapshot-only checks
    step_monitor: bool = True


class ReferenceConfig(_Strict):
    variant: Literal["local", "nonlocal_velocity", "nonlocal_solution"] = "local"
    n_cells: int = Field(8000, ge=1)
    kernel: Optional[KernelConfig] = None


class ConvergeConfig(_Strict):
    base: RunSpec
    etas: List[float] = Field(min_length=1)
    reference: ReferenceConfig = ReferenceConfig()
    time: Optional[float] = None
    window: Optional[Tuple[float, float]] = None

    @field_validator("etas")
    @classmethod
    def _positive(cls, v):
        if any(e <= 0 for e in v):
            raise ValueError("every eta must be positive")
        return sorted(v, reverse=True)

    @model_validator(mode="after")
    def _base_kernel(self):
        if self.base.variant == "local":
            raise ValueError("the converge base run must be nonlocal")
        if self.time is not None and not 0 < self.time <= self.base.t_end:
            raise ValueError("converge time must lie in (0, t_end]")
        return self


class RegionConfig(_Strict):
    name: str
    x_min: float
    x_max: float
    direction: Literal["increasing", "decreasing"]


class CompareConfig(_Strict):
    slice_time: float = Field(0.5, ge=0)
    labels: Optional[List[str]] = None
    regions: Optional[List[RegionConfig]] = None


class ExperimentConfig(_Strict):
    version: Literal[1] = CONFIG_VERSION
    runs: List[RunSpec] = Field(default_factory=list)
    diagnostics: DiagnosticsToggles = DiagnosticsToggles()
    output_dir: str = "out"
    converge: Optional[ConvergeConfig] = None
    compare: Optional[CompareConfig] = None

    @model_validator(mode="after")
    def _unique_labels(self):
        labels = [r.label for r in self.runs]
        dupes = sorted({x for x in labels if labels.count(x) > 1})
        if dupes:
            raise ValueError(f"duplicate run labels: {dupes}")
        if self.compare is not None and self.compare.labels is not None:
            missing = [x for x in self.compare.labels if x not in labels]
            if missing:
                raise ValueError(f"compare labels not among the runs: {missing}")
        return self

    def run_by_label(self) -> Dict[str, RunSpec]:
        return {r.label: r for r in self.runs}


def load_config(path) -> ExperimentConfig:
    """Parse and validate ``path``; every failure surfaces as :class:`ConfigError`."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(raw, source=str(path))


def parse_config(raw, source: str = "<config>") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    if "version" not in raw:
        raise ConfigError(f"{source}: missing 'version' field")
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    # build every catalog object once so bad parameters fail here
    try:
        specs = list(cfg.runs) + ([cfg.converge.base] if cfg.converge is not None else [])
        for run in specs:
            sc = run.solver_config()
            run.datum.build()
            if sc.kernel is not None and not sc.kernel.normalized:
                raise ValueError(f"run {run.label!r}: kernel has zero mass")
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg
