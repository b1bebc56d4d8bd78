from __future__ import annotations

import math
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import DomainError


class _Model(BaseModel):
    model_config = ConfigDict(populate_by_name=True)


class CriticalPointSpec(_Model):
    xi: List[float]
    beta: float = Field(default=2.0, gt=1.0)
    a: List[float] = Field(default_factory=list)
    # Declared only: flatness order and the regularity condition are not verified numerically.
    flatness_order: Optional[float] = Field(default=None, alias="flatnessOrder")
    regular: Optional[bool] = None

    @model_validator(mode="after")
    def _unit_location(self) -> "CriticalPointSpec":
        norm = math.sqrt(sum(c * c for c in self.xi))
        if not math.isclose(norm, 1.0, abs_tol=1e-9):
            raise ValueError("critical point location must be a unit vector")
        return self


class KProfileSpec(_Model):
    kind: Literal["constant", "affine_height", "zonal_polynomial", "spectral_file"] = "constant"
    value: float = 1.0
    a: float = 0.0
    b: float = 0.0
    coefficients: List[float] = Field(default_factory=list)
    path: Optional[str] = None
    positive: bool = True
    critical_points: List[CriticalPointSpec] = Field(default_factory=list, alias="criticalPoints")

    @model_validator(mode="after")
    def _kind_parameters(self) -> "KProfileSpec":
        if self.kind == "zonal_polynomial" and not self.coefficients:
            raise ValueError("zonal_polynomial needs at least one coefficient")
        if self.kind == "spectral_file" and not self.path:
            raise ValueError("spectral_file needs a path")
        return self


class GeometrySpec(_Model):
    n: int = Field(default=3, ge=2)
    sigma: float = 1.0
    mode: Literal["zonal", "fulls2"] = "zonal"
    L: int = Field(default=16, ge=0)
    nodes: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _admissible(self) -> "GeometrySpec":
        if not (0.0 < self.sigma < 0.5 * self.n):
            raise ValueError(f"sigma must lie in (0, n/2) for n={self.n}")
        if self.mode == "fulls2" and self.n != 2:
            raise ValueError("fulls2 mode requires n = 2")
        return self

    @property
    def critical_exponent(self) -> float:
        return (self.n + 2.0 * self.sigma) / (self.n - 2.0 * self.sigma)


class SolverConfig(_Model):
    tau: float = Field(default=1.0, ge=0.0)
    eta: float = Field(default=1.0, gt=0.0)
    max_iterations: int = Field(default=20000, alias="maxIterations", ge=1)
    tolerance: float = Field(default=1e-9, gt=0.0)
    symmetry: Literal["none", "antipodal"] = "none"
    blowup_threshold: float = Field(default=50.0, alias="blowupThreshold", gt=1.0)
    band_limit: Optional[int] = Field(default=None, alias="bandLimit", ge=0)
    growth_threshold: float = Field(default=0.05, alias="growthThreshold", ge=0.0)
    profile_tolerance: float = Field(default=0.05, alias="profileTolerance", gt=0.0)
    max_halvings: int = Field(default=40, alias="maxHalvings", ge=1)
    log_every: int = Field(default=500, alias="logEvery", ge=1)
    center_method: Literal["subgrid", "grid"] = Field(default="subgrid", alias="centerMethod")
    profile_radius: float = Field(default=10.0, alias="profileRadius", gt=0.0)
    rho: float = Field(default=0.5, gt=0.0)
    critical_tolerance: float = Field(default=1e-4, alias="criticalTolerance", gt=0.0)
    perturbation: float = Field(default=0.05, ge=0.0)

    def exponent(self, n: int, sigma: float) -> float:
        p = (n + 2.0 * sigma) / (n - 2.0 * sigma) - self.tau
        if p <= 1.0:
            raise DomainError(f"tau={self.tau} leaves p={p} <= 1")
        return p


class ScheduleSpec(_Model):
    tau_start: float = Field(default=0.5, alias="tauStart", gt=0.0)
    tau_end: float = Field(default=0.01, alias="tauEnd", ge=0.0)
    steps: int = Field(default=6, ge=2)
    spacing: Literal["auto", "geometric", "linear"] = "auto"

    @model_validator(mode="after")
    def _decreasing(self) -> "ScheduleSpec":
        if not self.tau_start > self.tau_end:
            raise ValueError("tau schedule must decrease: tauStart > tauEnd")
        if self.spacing == "geometric" and self.tau_end <= 0.0:
            raise ValueError("geometric tau schedule needs tauEnd > 0")
        return self

    def taus(self) -> List[float]:
        geometric = self.spacing == "geometric" or (self.spacing == "auto" and self.tau_end > 0.0)
        if geometric:
            values = np.geomspace(self.tau_start, self.tau_end, self.steps)
        else:
            values = np.linspace(self.tau_start, self.tau_end, self.steps)
        return [float(v) for v in values]


class ExpansionSpec(_Model):
    """Sampling of the two-bubble test-function quotient near beta = 1."""

    beta_min: float = Field(default=1.001, alias="betaMin", gt=1.0, le=2.0)
    beta_max: float = Field(default=1.01, alias="betaMax", gt=1.0, le=2.0)
    samples: int = Field(default=10, ge=3)
    nodes: int = Field(default=4096, ge=64)

    @model_validator(mode="after")
    def _window(self) -> "ExpansionSpec":
        if not self.beta_min < self.beta_max:
            raise ValueError("betaMin must be below betaMax")
        return self

    def betas(self) -> List[float]:
        return [float(b) for b in np.linspace(self.beta_min, self.beta_max, self.samples)]


class EnsembleSpec(_Model):
    n: int = Field(default=2, ge=1, le=2)
    sigma: float = 0.5
    samples: int = Field(default=100, ge=1)
    cells: List[int] = Field(default_factory=lambda: [24, 48])
    lp_exponent: Optional[float] = Field(default=None, alias="lpExponent", gt=0.0)
    norm_bound: float = Field(default=0.05, alias="normBound", gt=0.0)
    bk_bound: float = Field(default=0.1, alias="bkBound", gt=0.0)
    enforce_bk: bool = Field(default=True, alias="enforceBrezisKato")
    c0: float = Field(default=1.0, ge=1.0)
    alpha: float = Field(default=0.5, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def _admissible(self) -> "EnsembleSpec":
        if not (0.0 < self.sigma < 0.5 * self.n):
            raise ValueError(f"sigma must lie in (0, n/2) for n={self.n}")
        if not self.cells or any(c < 2 for c in self.cells):
            raise ValueError("cells must list resolutions of at least 2")
        return self

    def exponent(self) -> float:
        return self.lp_exponent if self.lp_exponent is not None else self.n / self.sigma


class ExperimentConfig(_Model):
    subcommand: Literal["spectrum", "verify", "solve", "continue", "testfn", "harnack", "index"] = "verify"
    geometry: GeometrySpec = Field(default_factory=GeometrySpec)
    K: KProfileSpec = Field(default_factory=KProfileSpec)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    schedule: ScheduleSpec = Field(default_factory=ScheduleSpec)
    seeds: List[int] = Field(default_factory=lambda: [0])
    testfn: ExpansionSpec = Field(default_factory=ExpansionSpec)
    ensemble: EnsembleSpec = Field(default_factory=EnsembleSpec)
    out: str = "reports"


__all__ = [
    "CriticalPointSpec",
    "EnsembleSpec",
    "ExpansionSpec",
    "ExperimentConfig",
    "GeometrySpec",
    "KProfileSpec",
    "ScheduleSpec",
    "SolverConfig",
]
