"""Strict run configuration and its translation into domain objects.

A config is one JSON document. Unknown keys are errors, and every random
element is driven by an explicit seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from hklapse.core import (
    ClippedSinusoid,
    Constant,
    ConstantOne,
    DropoutSchedule,
    RadialPower,
    RadialTable,
    SquareWave,
    integrate_weight,
)
from hklapse.errors import DomainError
from hklapse.integrator import FunctionHistory, PointInitial, SampledHistory
from hklapse.meanfield import PointMass, UniformBox


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


PositiveFloat = Annotated[float, Field(gt=0, allow_inf_nan=False)]
NonNegFloat = Annotated[float, Field(ge=0, allow_inf_nan=False)]


# --- model -----------------------------------------------------------------


class Undelayed(_Strict):
    kind: Literal["undelayed"] = "undelayed"


class Delayed(_Strict):
    kind: Literal["delayed"] = "delayed"
    tau: NonNegFloat


ModelConfig = Annotated[Union[Undelayed, Delayed], Field(discriminator="kind")]


# --- influence -------------------------------------------------------------


class ConstantInfluence(_Strict):
    family: Literal["constant"] = "constant"
    c: PositiveFloat = 1.0


class RadialPowerInfluence(_Strict):
    family: Literal["radial_power"] = "radial_power"
    K: PositiveFloat = 1.0
    beta: NonNegFloat = 1.0


class RadialTableInfluence(_Strict):
    family: Literal["radial_table"] = "radial_table"
    radii: list[float]
    values: list[float]


InfluenceConfig = Annotated[
    Union[ConstantInfluence, RadialPowerInfluence, RadialTableInfluence],
    Field(discriminator="family"),
]


def build_influence(cfg) -> object:
    if cfg.family == "constant":
        return Constant(cfg.c)
    if cfg.family == "radial_power":
        return RadialPower(cfg.K, cfg.beta)
    return RadialTable(tuple(cfg.radii), tuple(cfg.values))


# --- weight ----------------------------------------------------------------


class ConstantOneWeight(_Strict):
    family: Literal["constant_one"] = "constant_one"


class SquareWaveWeight(_Strict):
    family: Literal["square_wave"] = "square_wave"
    period: PositiveFloat
    duty: Annotated[float, Field(gt=0, le=1)]
    phase: float = 0.0
    ramp: PositiveFloat | None = None


class ClippedSinusoidWeight(_Strict):
    family: Literal["clipped_sinusoid"] = "clipped_sinusoid"
    period: PositiveFloat
    floor: Annotated[float, Field(ge=0, lt=1)] = 0.0


class DropoutWeight(_Strict):
    family: Literal["dropout"] = "dropout"
    on_intervals: list[tuple[float, float]]
    period: PositiveFloat | None = None
    ramp: PositiveFloat | None = None


WeightConfig = Annotated[
    Union[ConstantOneWeight, SquareWaveWeight, ClippedSinusoidWeight, DropoutWeight],
    Field(discriminator="family"),
]


def build_weight(cfg) -> object:
    if cfg.family == "constant_one":
        return ConstantOne()
    if cfg.family == "square_wave":
        return SquareWave(cfg.period, cfg.duty, cfg.phase, cfg.ramp)
    if cfg.family == "clipped_sinusoid":
        return ClippedSinusoid(cfg.period, cfg.floor)
    return DropoutSchedule(tuple(tuple(iv) for iv in cfg.on_intervals), cfg.period, cfg.ramp)


# --- history ---------------------------------------------------------------


class LiteralHistory(_Strict):
    """Initial opinions; held constant on ``[-tau, 0]`` under delay."""

    kind: Literal["literal"] = "literal"
    x0: list[list[float]]


class LinearHistory(_Strict):
    """``x(s) = x0 + s * velocity`` on ``[-tau, 0]``."""

    kind: Literal["linear"] = "linear"
    x0: list[list[float]]
    velocity: list[list[float]]


class SampledHistoryConfig(_Strict):
    kind: Literal["samples"] = "samples"
    times: list[float]
    values: list[list[list[float]]]


class RandomHistory(_Strict):
    """Uniform ``x0`` in ``[low, high]^d`` plus optional Gaussian drift ``x0 + s * v``."""

    kind: Literal["uniform"] = "uniform"
    seed: int
    low: float = -1.0
    high: float = 1.0
    drift: NonNegFloat = 0.0

    @model_validator(mode="after")
    def _order(self):
        if not self.high > self.low:
            raise ValueError("high must exceed low")
        return self


HistoryConfig = Annotated[
    Union[LiteralHistory, LinearHistory, SampledHistoryConfig, RandomHistory],
    Field(discriminator="kind"),
]


@dataclass(frozen=True)
class LinearDrift:
    """Picklable history callable ``s -> x0 + s * v``."""

    x0: np.ndarray
    v: np.ndarray

    def __call__(self, s: float) -> np.ndarray:
        return self.x0 + s * self.v


def build_history(cfg, N: int, d: int):
    if cfg.kind == "literal":
        x0 = np.asarray(cfg.x0, dtype=float)
        _check_shape(x0, N, d, "x0")
        return PointInitial(x0)
    if cfg.kind == "linear":
        x0 = np.asarray(cfg.x0, dtype=float)
        v = np.asarray(cfg.velocity, dtype=float)
        _check_shape(x0, N, d, "x0")
        _check_shape(v, N, d, "velocity")
        return FunctionHistory(LinearDrift(x0, v))
    if cfg.kind == "samples":
        values = np.asarray(cfg.values, dtype=float)
        if values.ndim != 3 or values.shape[1:] != (N, d):
            raise DomainError(f"history values must have shape (M, {N}, {d})")
        return SampledHistory(np.asarray(cfg.times, dtype=float), values)
    rng = np.random.default_rng(cfg.seed)
    x0 = rng.uniform(cfg.low, cfg.high, size=(N, d))
    if cfg.drift == 0:
        return PointInitial(x0)
    v = cfg.drift * rng.standard_normal((N, d))
    return FunctionHistory(LinearDrift(x0, v))


def _check_shape(a: np.ndarray, N: int, d: int, name: str) -> None:
    if a.shape != (N, d):
        raise DomainError(f"{name} has shape {a.shape}, expected ({N}, {d})")


# --- remaining sections ----------------------------------------------------


class WfConfig(_Strict):
    T: PositiveFloat
    alpha_bar: Union[PositiveFloat, Literal["auto"]] = "auto"
    horizon: PositiveFloat | None = None


class IntegratorConfig(_Strict):
    h: PositiveFloat | None = None
    t_end: PositiveFloat = 5.0
    decimation: Annotated[int, Field(ge=1)] = 1


class OutputsConfig(_Strict):
    dir: str = "out"
    trajectory: str = "trajectory.csv"
    bounds: str = "bounds.csv"
    report: str = "report.json"
    manifest: str = "manifest.json"


SweepAxis = Literal["tau", "alpha_bar", "duty", "N", "seed"]


class SweepConfig(_Strict):
    axes: dict[SweepAxis, list[float]]

    @field_validator("axes")
    @classmethod
    def _axes(cls, v):
        if not 1 <= len(v) <= 2:
            raise ValueError("sweep over one or two axes")
        for k, vals in v.items():
            if not vals:
                raise ValueError(f"sweep axis {k!r} is empty")
        return v


class UniformBoxSampler(_Strict):
    kind: Literal["uniform_box"] = "uniform_box"
    low: float = 0.0
    high: float = 1.0


class PointMassSampler(_Strict):
    kind: Literal["point_mass"] = "point_mass"
    point: list[float]


class MeanfieldConfig(_Strict):
    N_list: list[Annotated[int, Field(ge=2)]] = [8, 16, 32, 64]
    sampler: Annotated[Union[UniformBoxSampler, PointMassSampler],
                       Field(discriminator="kind")] = UniformBoxSampler()
    seed: int = 0
    n_times: Annotated[int, Field(ge=2)] = 101
    budget: PositiveFloat = 1e5

    @field_validator("N_list")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("N_list is empty")
        return v


def build_sampler(cfg, d: int):
    if cfg.kind == "uniform_box":
        return UniformBox(d, cfg.low, cfg.high)
    if len(cfg.point) != d:
        raise DomainError("point mass dimension differs from d")
    return PointMass(tuple(cfg.point))


class Overrides(_Strict):
    gamma: PositiveFloat | None = None


Mode = Literal["simulate", "verify", "sweep", "meanfield", "certify-wf"]


class RunConfig(_Strict):
    mode: Mode = "verify"
    model: ModelConfig = Undelayed()
    N: Annotated[int, Field(ge=2)]
    d: Annotated[int, Field(ge=1)] = 1
    influence: InfluenceConfig = ConstantInfluence()
    weight: WeightConfig = ConstantOneWeight()
    history: HistoryConfig | None = None
    wf: WfConfig
    integrator: IntegratorConfig = IntegratorConfig()
    outputs: OutputsConfig = OutputsConfig()
    sweep: SweepConfig | None = None
    meanfield: MeanfieldConfig | None = None
    overrides: Overrides = Overrides()
    trajectory_input: str | None = None

    @property
    def tau(self) -> float:
        return self.model.tau if self.model.kind == "delayed" else 0.0

    @model_validator(mode="after")
    def _consistent(self):
        if self.mode == "sweep" and self.sweep is None:
            raise ValueError("sweep mode needs a sweep section")
        if self.mode in ("simulate", "verify", "sweep") and self.history is None \
                and self.trajectory_input is None:
            raise ValueError(f"{self.mode} mode needs a history section")
        if self.sweep and "duty" in self.sweep.axes and self.weight.family != "square_wave":
            raise ValueError("duty axis needs a square_wave weight")
        for axis in ("seed", "N"):
            if self.sweep and axis in self.sweep.axes and (
                    self.history is None or self.history.kind != "uniform"):
                raise ValueError(f"{axis} axis needs a uniform history")
        if self.wf.alpha_bar != "auto" and self.wf.alpha_bar > self.wf.T:
            raise ValueError("alpha_bar cannot exceed T")
        return self

    def horizon(self) -> float:
        """Certification horizon: covers ``t_end`` plus room for merged intervals."""
        cover = self.integrator.t_end + 2.0 * (self.wf.T + self.tau)
        return max(self.wf.horizon or 0.0, cover)

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, indent=2)


def load_config(text: str) -> RunConfig:
    """Parse a config document, or the ``config`` member of a run manifest."""
    doc = json.loads(text)
    if isinstance(doc, dict) and "manifest_version" in doc:
        doc = doc["config"]
    return RunConfig.model_validate(doc)


def auto_alpha_bar(weight, T: float, horizon: float, shifts: int = 256) -> float:
    """``0.99`` times the smallest integral of the weight over windows of length ``T``.

    Window starts sweep one period (or ``[0, horizon - T]`` for aperiodic
    weights).
    """
    span = weight.period if weight.period else max(horizon - T, 0.0)
    starts = np.linspace(0.0, span, shifts, endpoint=False) if span > 0 else np.zeros(1)
    worst = min(integrate_weight(weight, float(s), float(s) + T)[0] for s in starts)
    if not worst > 0:
        raise DomainError("weight has a window of length T with zero integral")
    return 0.99 * min(worst, T)


def resolve_alpha_bar(cfg: RunConfig, weight) -> float:
    if cfg.wf.alpha_bar == "auto":
        return auto_alpha_bar(weight, cfg.wf.T, cfg.horizon())
    return float(cfg.wf.alpha_bar)


def replace(cfg: RunConfig, **updates) -> RunConfig:
    """Copy with nested updates given as dotted keys, revalidated."""
    data = cfg.model_dump(mode="json")
    for key, value in updates.items():
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node[p]
        node[parts[-1]] = value
    return RunConfig.model_validate(data)
