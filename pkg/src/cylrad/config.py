"""Run configuration: YAML text parsed into strict pydantic models.

Unknown keys are rejected.  Errors carry a line number (syntax) or a dotted
field path such as ``law.stable.alpha`` (semantics).
"""
from __future__ import annotations

from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .cylaw import (CompoundPoisson, FiniteMixture, Gaussian, GaussianJump, PointMass, Stable)
from .levyint import IntegrandF, LevyModel
from .spaces import Operator, SpaceSpec, Tail, Vector, hilbert

SUBCOMMANDS = ("sample", "cf-check", "kl", "radon", "integrate")


class ConfigError(ValueError):
    """Invalid configuration; ``where`` is a line number or a field path."""

    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SpaceCfg(Strict):
    dim: int = Field(ge=0)
    exponent: Union[float, Literal["2-hilbert"]] = "2-hilbert"
    label: str = "V"

    @field_validator("exponent")
    @classmethod
    def _exp(cls, v):
        if v != "2-hilbert" and not v >= 1:
            raise ValueError("exponent must be >= 1")
        return v

    def build(self) -> SpaceSpec:
        if self.exponent == "2-hilbert":
            return hilbert(self.dim, self.label)
        return SpaceSpec(float(self.exponent), self.dim, self.label)


class TailCfg(Strict):
    exponent: float = 0.0
    scale: float = 1.0
    kind: Literal["diagonal-power-decay", "unspecified"] = "diagonal-power-decay"

    def build(self) -> Tail:
        return Tail(self.exponent, self.scale, self.kind)


class OperatorCfg(Strict):
    """``identity``, ``zero``, ``power_decay`` (entries scale*k^-s), ``diagonal``
    (explicit values) or ``matrix`` (explicit rows).  ``tail: auto`` continues a
    power decay or identity symbolically."""

    kind: Literal["identity", "zero", "power_decay", "diagonal", "matrix"] = "identity"
    s: float = 0.0
    scale: float = 1.0
    values: Optional[list[float]] = None
    rows: Optional[list[list[float]]] = None
    tail: Union[Literal["auto", "none"], TailCfg] = "none"

    @model_validator(mode="after")
    def _payload(self):
        if self.kind == "diagonal" and self.values is None:
            raise ValueError("diagonal operator needs values")
        if self.kind == "matrix" and self.rows is None:
            raise ValueError("matrix operator needs rows")
        return self

    def build(self, domain: SpaceSpec, codomain: SpaceSpec | None = None) -> Operator:
        codomain = codomain or domain
        d_out, d_in = codomain.dim, domain.dim
        if self.kind == "matrix":
            M = np.asarray(self.rows, float).reshape(len(self.rows), -1) if self.rows else \
                np.zeros((0, d_in))
        elif self.kind == "zero":
            M = np.zeros((d_out, d_in))
        else:
            if self.kind == "diagonal":
                diag = np.asarray(self.values, float)
            elif self.kind == "identity":
                diag = self.scale * np.ones(min(d_out, d_in))
            else:
                diag = self.scale * np.arange(1, min(d_out, d_in) + 1, dtype=float) ** -self.s
            M = np.zeros((d_out, d_in))
            r = min(len(diag), d_out, d_in)
            M[np.arange(r), np.arange(r)] = diag[:r]
        tail = None
        if isinstance(self.tail, TailCfg):
            tail = self.tail.build()
        elif self.tail == "auto":
            if self.kind == "identity":
                tail = Tail(0.0, self.scale)
            elif self.kind == "power_decay":
                tail = Tail(self.s, self.scale)
            else:
                raise ValueError("tail: auto needs an identity or power_decay operator")
        return Operator(M, domain, codomain, tail)


class JumpCfg(Strict):
    point_mass: Optional[list[float]] = None
    gaussian: Optional[dict] = None
    mixture: Optional["MixtureCfg"] = None

    @model_validator(mode="after")
    def _one(self):
        n = sum(x is not None for x in (self.point_mass, self.gaussian, self.mixture))
        if n != 1:
            raise ValueError("exactly one of point_mass, gaussian, mixture")
        if self.gaussian:
            raise ValueError("gaussian jump law takes no parameters")
        return self

    def build(self, space: SpaceSpec):
        if self.point_mass is not None:
            return PointMass(Vector(np.asarray(self.point_mass, float), space))
        if self.gaussian is not None:
            return GaussianJump(space)
        pts = tuple(Vector(np.asarray(p, float), space) for p in self.mixture.points)
        return FiniteMixture(np.asarray(self.mixture.weights, float), pts)


class MixtureCfg(Strict):
    weights: list[float]
    points: list[list[float]]


JumpCfg.model_rebuild()


class StableCfg(Strict):
    alpha: float
    F: OperatorCfg = OperatorCfg()

    @field_validator("alpha")
    @classmethod
    def _alpha(cls, v):
        if not 0.0 < v <= 2.0:
            raise ValueError("alpha must lie in (0, 2]")
        return v


class CPCfg(Strict):
    c: float = Field(gt=0)
    jump: JumpCfg
    compensated: bool = False


class LawCfg(Strict):
    gaussian: Optional[dict] = None
    stable: Optional[StableCfg] = None
    compound_poisson: Optional[CPCfg] = None

    @model_validator(mode="after")
    def _one(self):
        n = sum(x is not None for x in (self.gaussian, self.stable, self.compound_poisson))
        if n != 1:
            raise ValueError("exactly one of gaussian, stable, compound_poisson")
        if self.gaussian:
            raise ValueError("gaussian law takes no parameters")
        return self

    def build(self, space: SpaceSpec):
        if self.gaussian is not None:
            return Gaussian(space)
        if self.stable is not None:
            target = SpaceSpec(self.stable.alpha, space.dim, "L_alpha") \
                if self.stable.alpha >= 1 else hilbert(space.dim, "L_alpha")
            return Stable(self.stable.alpha, self.stable.F.build(space, target))
        cp = self.compound_poisson
        return CompoundPoisson(cp.c, cp.jump.build(space), cp.compensated)


class Tolerances(Strict):
    tau: Optional[float] = None
    k_sigma: Optional[float] = None
    duality: Optional[float] = None
    trend_threshold: Optional[float] = None


class CFCheckCfg(Strict):
    testpoints: Optional[list[list[float]]] = None
    roots: list[int] = []


class KLCfg(Strict):
    isometry_h: Optional[list[float]] = None
    testpoints: Optional[list[list[float]]] = None


class RadonCfg(Strict):
    p: float = 2.0
    schedule: Optional[list[int]] = None
    codomain: Optional[SpaceCfg] = None


class ModelCfg(Strict):
    U: SpaceCfg
    K: Optional[SpaceCfg] = None
    b: Optional[list[float]] = None
    i_C: OperatorCfg = OperatorCfg(kind="zero")
    intensity: float = Field(default=0.0, ge=0)
    jump: Optional[JumpCfg] = None
    horizon: float = Field(default=1.0, gt=0)
    cells: int = Field(default=64, ge=1)

    def build(self) -> LevyModel:
        U = self.U.build()
        K = self.K.build() if self.K is not None else hilbert(U.dim, "K")
        b = np.zeros(U.dim) if self.b is None else np.asarray(self.b, float)
        jump = self.jump.build(U) if self.jump is not None else None
        return LevyModel(Vector(b, U), self.i_C.build(K, U), self.intensity, jump,
                         self.horizon, self.cells)


class IntegrandCfg(Strict):
    """F(s) = R (``constant``) or F(s) = s*R (``linear``), sampled at left endpoints."""

    V: SpaceCfg
    operator: OperatorCfg
    shape: Literal["constant", "linear"] = "constant"
    singular_cells: list[int] = []
    cells_A: Optional[list[int]] = None

    def build(self, model: LevyModel) -> IntegrandF:
        R = self.operator.build(model.U, self.V.build())
        N = model.cells
        if self.shape == "constant":
            F = IntegrandF.constant(R, N)
        else:
            F = IntegrandF.from_function(lambda s: s * R, model.horizon, N)
        sing = [False] * N
        for i in self.singular_cells:
            if not 0 <= i < N:
                raise ValueError(f"singular cell {i} outside the grid")
            sing[i] = True
        return IntegrandF(F.cells, tuple(sing))


class RunConfig(Strict):
    subcommand: Literal["sample", "cf-check", "kl", "radon", "integrate"]
    seed: Optional[int] = Field(default=None, ge=0)
    n: int = Field(default=10_000, ge=1)
    out_dir: Optional[str] = None
    space: Optional[SpaceCfg] = None
    law: Optional[LawCfg] = None
    functionals: Optional[list[list[float]]] = None
    operator: Optional[OperatorCfg] = None
    model: Optional[ModelCfg] = None
    integrand: Optional[IntegrandCfg] = None
    cf_check: CFCheckCfg = CFCheckCfg()
    kl: KLCfg = KLCfg()
    radon: RadonCfg = RadonCfg()
    tolerances: Tolerances = Tolerances()

    @model_validator(mode="after")
    def _blocks(self):
        need = {"sample": ("space", "law"), "cf-check": ("space", "law"),
                "kl": ("space", "law"), "radon": ("space", "law", "operator"),
                "integrate": ("model", "integrand")}[self.subcommand]
        for name in need:
            if getattr(self, name) is None:
                raise ValueError(f"subcommand {self.subcommand} needs a '{name}' block")
        return self


def _path(loc) -> str:
    return ".".join(str(x) for x in loc if not str(x).startswith("function-"))


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Strict parse of a YAML run description."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else "line ?"
        raise ConfigError(f"syntax error: {getattr(exc, 'problem', exc)}", where) from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a mapping", "line 1")
    doc = {**doc, **{k: v for k, v in (overrides or {}).items() if v is not None}}
    if "subcommand" not in doc:
        raise ConfigError("missing subcommand")
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        err = exc.errors()[0]
        raise ConfigError(err["msg"], _path(err["loc"])) from None
