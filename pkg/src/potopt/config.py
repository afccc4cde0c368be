"""Experiment configuration: YAML files validated by pydantic models.

Physical parameters have no defaults; solver tolerances do.  Unknown keys
are rejected at every level.  ``load_config`` turns every validation
problem into a ConfigError.
"""
from __future__ import annotations

import copy
from importlib import resources
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field as PField, ValidationError, model_validator

from .errors import ConfigError
from .grid import Field, Grid, make_interval, make_radial
from .optimize import SolverOptions

SCHEMA_VERSION = "1.0"
RECIPES = ("examdelta", "figure1", "figure2", "counterexample", "twoball", "lambda1")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainConfig(_Strict):
    kind: Literal["interval", "radial"]
    nodes: int = PField(ge=3)
    lower: Optional[float] = None
    upper: Optional[float] = None
    radius: Optional[float] = PField(default=None, gt=0)
    dimension: Optional[int] = PField(default=None, ge=1)

    @model_validator(mode="after")
    def _shape(self):
        if self.kind == "interval":
            if self.lower is None or self.upper is None:
                raise ValueError("interval domains need lower and upper")
            if not self.lower < self.upper:
                raise ValueError("need lower < upper")
            if self.radius is not None or self.dimension is not None:
                raise ValueError("radius/dimension belong to radial domains")
        else:
            if self.radius is None or self.dimension is None:
                raise ValueError("radial domains need radius and dimension")
            if self.lower is not None or self.upper is not None:
                raise ValueError("lower/upper belong to interval domains")
        return self

    def grid(self) -> Grid:
        if self.kind == "interval":
            return make_interval(self.lower, self.upper, self.nodes)
        return make_radial(self.radius, self.dimension, self.nodes)


class SourceConfig(_Strict):
    """f: constant value, indicator of |x - center| <= radius, or a unit
    point mass at ``center`` (nodal spike of mass 1)."""

    kind: Literal["constant", "indicator", "delta"]
    value: Optional[float] = None
    radius: Optional[float] = PField(default=None, gt=0)
    center: Optional[float] = None

    @model_validator(mode="after")
    def _shape(self):
        if self.kind == "constant" and self.value is None:
            raise ValueError("constant source needs value")
        if self.kind == "indicator" and self.radius is None:
            raise ValueError("indicator source needs radius")
        if self.kind == "delta" and self.center is None:
            raise ValueError("delta source needs center")
        return self

    def field(self, grid: Grid) -> Field:
        if self.kind == "constant":
            return grid.field(self.value)
        if self.kind == "indicator":
            c = self.center if self.center is not None else grid.center
            dist = np.abs(grid.nodes - c)
            height = 1.0 if self.value is None else self.value
            return grid.field(np.where(dist <= self.radius + 1e-12 * grid.h, height, 0.0))
        i = int(np.argmin(np.abs(grid.nodes - self.center)))
        if abs(grid.nodes[i] - self.center) > 1e-9 * grid.h:
            raise ConfigError(f"delta center {self.center} is not a grid node")
        f = np.zeros(grid.n)
        f[i] = 1.0 / grid.weights[i]
        return grid.field(f)


class ConstraintConfig(_Strict):
    family: Literal["lp", "inverse_lp", "exponential"]
    p: Optional[float] = PField(default=None, gt=0)
    alpha: Optional[float] = PField(default=None, gt=0)
    budget: float = PField(default=1.0, gt=0)

    @model_validator(mode="after")
    def _shape(self):
        if self.family == "exponential":
            if self.alpha is None:
                raise ValueError("exponential constraint needs alpha")
        elif self.p is None:
            raise ValueError(f"{self.family} constraint needs p")
        if self.family == "lp" and self.p is not None and self.p < 1:
            raise ValueError("lp constraints with p < 1 have no optimum; see the counterexample experiment")
        return self


class ProblemConfig(_Strict):
    objective: Literal["energy", "lambda1", "lambda2"]
    constraint: ConstraintConfig
    domain: DomainConfig
    source: Optional[SourceConfig] = None

    @model_validator(mode="after")
    def _shape(self):
        if self.objective == "energy" and self.source is None:
            raise ValueError("energy objectives need a source")
        if self.objective != "energy" and self.source is not None:
            raise ValueError("eigenvalue objectives take no source")
        fam = self.constraint.family
        if self.objective == "lambda1" and fam == "lp":
            raise ValueError("lambda1 is minimized under inverse_lp or exponential constraints")
        if self.objective == "lambda2" and fam != "inverse_lp":
            raise ValueError("lambda2 is built for inverse_lp constraints")
        if self.objective == "lambda2" and self.domain.kind != "interval":
            raise ValueError("lambda2 places two wells on an interval domain")
        return self


class CounterexampleConfig(_Strict):
    n: int = PField(ge=2)
    j: int = PField(ge=1)
    p: float = PField(gt=0, lt=1)
    grid_nodes: Optional[int] = PField(default=None, ge=3)


class TwoWellConfig(_Strict):
    separation: float = PField(gt=0)


class SolverConfig(_Strict):
    max_iter: int = PField(default=100_000, ge=1)
    gtol: float = PField(default=1e-8, gt=0)
    backtrack: float = PField(default=0.5, gt=0, lt=1)
    armijo: float = PField(default=1e-4, gt=0, lt=1)
    schedule: Optional[list[float]] = None

    def options(self) -> SolverOptions:
        return SolverOptions(self.max_iter, self.gtol, self.backtrack, self.armijo, self.schedule)


class AnalysisConfig(_Strict):
    support_rerun: bool = False
    refinement: bool = True


class ExperimentConfig(_Strict):
    name: str
    problem: Optional[ProblemConfig] = None
    counterexample: Optional[CounterexampleConfig] = None
    twowell: Optional[TwoWellConfig] = None
    solver: SolverConfig = PField(default_factory=SolverConfig)
    analysis: AnalysisConfig = PField(default_factory=AnalysisConfig)
    outputs: list[Literal["json", "csv", "summary"]] = PField(default_factory=lambda: ["json", "csv", "summary"])

    @model_validator(mode="after")
    def _shape(self):
        if (self.problem is None) == (self.counterexample is None):
            raise ValueError("give exactly one of problem or counterexample")
        if self.problem is not None and self.problem.objective == "lambda2" and self.twowell is None:
            raise ValueError("lambda2 needs a twowell section")
        if self.solver.schedule is not None:
            try:
                self.solver.options()
            except ValueError as exc:
                raise ValueError(str(exc)) from exc
        return self


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} does not hold a mapping")
    return parse_config(data)


def recipe_text(name: str) -> str:
    if name not in RECIPES:
        raise ConfigError(f"unknown recipe {name!r}; choose from {', '.join(RECIPES)}")
    return resources.files("potopt.recipes").joinpath(f"{name}.yaml").read_text()


def load_recipe(name: str) -> ExperimentConfig:
    return parse_config(yaml.safe_load(recipe_text(name)))


def echo(cfg: ExperimentConfig) -> dict:
    """Plain-data form that re-parses to the same config."""
    return cfg.model_dump(mode="json")


def set_param(data: dict, dotted: str, value: float) -> dict:
    """Copy of a config mapping with one numeric field replaced."""
    out = copy.deepcopy(data)
    keys = dotted.split(".")
    node = out
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node or not isinstance(node[k], dict):
            raise ConfigError(f"no config section {k!r} on the path {dotted!r}")
        node = node[k]
    last = keys[-1]
    if not isinstance(node, dict) or last not in node:
        raise ConfigError(f"no config field {dotted!r}")
    old = node[last]
    if isinstance(old, bool) or not isinstance(old, (int, float)):
        raise ConfigError(f"{dotted!r} is not a numeric field")
    if isinstance(old, int) and float(value).is_integer():
        value = int(value)
    node[last] = value
    return out
