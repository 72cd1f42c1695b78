"""Experiment configuration.

Configs are TOML files validated against the models below. Every section is
optional; a missing section takes its defaults. Validation failures surface
as ConfigError whose key is the dotted path of the offending entry, for
example ``field.name`` or ``spectrum.spacing``.
"""

from __future__ import annotations

import hashlib
import json
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Annotated, Any, Literal, Mapping

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from maglt.core.domain import Box
from maglt.core.errors import ConfigError
from maglt.core.field_model import FIELD_NAMES, MagneticFieldModel, builtin_field
from maglt.core.potentials import POTENTIAL_NAMES, Potential, builtin_potential

OUTPUT_ROOT_ENV = "MAGLT_OUTPUT_ROOT"

STEP_NAMES = (
    "scales",
    "cover",
    "geometry",
    "bounds",
    "const-field",
    "spectrum",
    "verify-lt",
    "zero-modes",
    "opineq",
)

StepName = Literal[
    "scales", "cover", "geometry", "bounds", "const-field", "spectrum", "verify-lt", "zero-modes", "opineq"
]
Vec3 = tuple[float, float, float]
Positive = Annotated[float, Field(gt=0)]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class FieldSpec(_Section):
    name: Annotated[str, Field(description=f"One of: {', '.join(FIELD_NAMES)}")] = "constant"
    params: dict[str, Any] = Field(default_factory=dict)

    @field_validator("name")
    @classmethod
    def _known_field(cls, value: str) -> str:
        if value not in FIELD_NAMES:
            raise ValueError(f"unknown field '{value}' (expected one of {', '.join(FIELD_NAMES)})")
        return value

    @model_validator(mode="after")
    def _buildable(self) -> "FieldSpec":
        self.build()
        return self

    def build(self) -> MagneticFieldModel:
        return builtin_field(self.name, self.params)


class PotentialSpec(_Section):
    name: Annotated[str, Field(description=f"One of: {', '.join(POTENTIAL_NAMES)}")] = "zero"
    params: dict[str, Any] = Field(default_factory=dict)

    @field_validator("name")
    @classmethod
    def _known_potential(cls, value: str) -> str:
        if value not in POTENTIAL_NAMES:
            raise ValueError(f"unknown potential '{value}' (expected one of {', '.join(POTENTIAL_NAMES)})")
        return value

    @model_validator(mode="after")
    def _buildable(self) -> "PotentialSpec":
        self.build()
        return self

    def build(self) -> Potential:
        return builtin_potential(self.name, self.params)


class BoxSpec(_Section):
    lower: Vec3 = (-1.0, -1.0, -1.0)
    upper: Vec3 = (1.0, 1.0, 1.0)

    @model_validator(mode="after")
    def _ordered(self) -> "BoxSpec":
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("lower must be below upper in every coordinate")
        return self

    def build(self) -> Box:
        return Box(self.lower, self.upper)


class GridSpec(_Section):
    """Lattice resolution; an explicit spacing wins over points_per_length."""

    spacing: Positive | None = None
    points_per_length: Annotated[float, Field(ge=2)] = 8.0
    max_dimension: Annotated[int, Field(ge=2, le=2_000_000)] = 2_000_000


class SolverSpec(_Section):
    tol: Annotated[float, Field(gt=0, lt=1)] = 1e-9
    dense_limit: Annotated[int, Field(ge=0)] = 4000
    max_iterations: Annotated[int, Field(ge=1)] | None = None


class ScalesSpec(_Section):
    points: list[Vec3] = Field(default_factory=list)
    grid: Annotated[int, Field(ge=1, le=16)] = 3
    tempered_pairs: Annotated[int, Field(ge=0)] = 200


class CoverSpec(_Section):
    region: BoxSpec | None = None
    ell_factor: Annotated[float, Field(gt=0, le=64)] = 1.0
    padding: Annotated[float, Field(ge=0)] = 0.0
    interpolation_points: Annotated[int, Field(ge=2, le=9)] = 3
    probes_per_axis: Annotated[int, Field(ge=2, le=128)] = 64
    partition_points: Annotated[int, Field(ge=1)] = 100_000
    annulus_check: bool = False
    local_fields: Annotated[int, Field(ge=0, le=256)] = 0


class GeometrySpec(_Section):
    base: Vec3 = (0.0, 0.0, 0.0)
    ell: Positive | None = None
    tau_max: Positive | None = None
    chart_points: Annotated[int, Field(ge=1)] = 1000
    pair_probes: Annotated[int, Field(ge=0)] = 0
    localization_b: Positive = 1.0
    localization_eta: Annotated[float, Field(ge=0, le=0.25)] = 0.25
    localization_grid: Annotated[int, Field(ge=8, le=256)] = 64
    localization_mode: Literal["spectral", "stencil"] = "spectral"
    allocation_lambda: Annotated[float, Field(gt=0, le=0.5)] | None = None


class PressureQuerySpec(_Section):
    B: Annotated[float, Field(ge=0)]
    W: Annotated[float, Field(ge=0)]


class BoundsSpec(_Section):
    amplitudes: list[Positive] = Field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0])
    hs: list[Positive] = Field(default_factory=list)
    pressure: list[PressureQuerySpec] = Field(
        default_factory=lambda: [PressureQuerySpec(B=0.0, W=1.0), PressureQuerySpec(B=1.0, W=1.0)]
    )
    points_per_axis: Annotated[int, Field(ge=2, le=9)] = 3
    tol: Annotated[float, Field(gt=0, lt=1)] = 1e-6


class ConstFieldSpec(_Section):
    b: Positive = 1.0
    P: Positive = 1.0
    semigroup_times: tuple[Positive, Positive] = (0.3, 0.3)
    decay_fit: bool = True
    profile: bool = True


class SpectrumSpec(_Section):
    h: Positive = 1.0
    refine: bool = False
    birman_schwinger: bool = False
    ground_state: bool = False
    export_coo: bool = False


class VerifyLTSpec(_Section):
    amplitudes: list[Positive] = Field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0])
    bump: FieldSpec | None = None
    bump_factors: list[Annotated[float, Field(ge=0)]] = Field(default_factory=lambda: [1.0, 10.0])
    hs: list[Positive] = Field(default_factory=list)


class ZeroModesSpec(_Section):
    k: Annotated[int, Field(ge=1, le=64)] = 4
    tol: Positive = 1e-2
    scales: list[Positive] = Field(default_factory=lambda: [1.0])
    density_points: list[Vec3] = Field(default_factory=lambda: [(0.0, 0.0, 0.0)])
    refine: bool = False


class OpineqSpec(_Section):
    count: Annotated[int, Field(ge=1, le=100_000)] = 1000


class RunSpec(_Section):
    steps: list[StepName] = Field(default_factory=list)


class ExperimentConfig(_Section):
    """
    A complete experiment.

    Attributes:
        epsilon: Scale parameter, 0 < ε < 1/1000.
        seed: Seed for every random draw; steps derive their own streams.
        deterministic: Run single-threaded so that outputs are byte-identical.
        threads: Worker cap for intra-step parallelism; None uses MAGLT_THREADS.
        output_dir: Report directory, relative paths resolve under MAGLT_OUTPUT_ROOT.
    """

    epsilon: Annotated[float, Field(gt=0, lt=1e-3)] = 1.0 / 1024
    seed: Annotated[int, Field(ge=0)] = 0
    deterministic: bool = False
    threads: Annotated[int, Field(ge=1)] | None = None
    output_dir: str = "maglt-out"

    field: FieldSpec = Field(default_factory=FieldSpec)
    potential: PotentialSpec = Field(default_factory=PotentialSpec)
    box: BoxSpec = Field(default_factory=BoxSpec)
    grid: GridSpec = Field(default_factory=GridSpec)
    solver: SolverSpec = Field(default_factory=SolverSpec)
    run: RunSpec = Field(default_factory=RunSpec)

    scales: ScalesSpec = Field(default_factory=ScalesSpec)
    cover: CoverSpec = Field(default_factory=CoverSpec)
    geometry: GeometrySpec = Field(default_factory=GeometrySpec)
    bounds: BoundsSpec = Field(default_factory=BoundsSpec)
    const_field: ConstFieldSpec = Field(default_factory=ConstFieldSpec)
    spectrum: SpectrumSpec = Field(default_factory=SpectrumSpec)
    verify_lt: VerifyLTSpec = Field(default_factory=VerifyLTSpec)
    zero_modes: ZeroModesSpec = Field(default_factory=ZeroModesSpec)
    opineq: OpineqSpec = Field(default_factory=OpineqSpec)

    @property
    def max_workers(self) -> int | None:
        return 1 if self.deterministic else self.threads

    def section(self, step: str) -> _Section:
        return getattr(self, step.replace("-", "_"))

    def config_hash(self) -> str:
        """sha256 of the canonical JSON form, ignoring where outputs go."""
        payload = self.model_dump(mode="json", exclude={"output_dir", "threads"})
        raw = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(raw).hexdigest()

    def resolved_output_dir(self, override: Path | None = None) -> Path:
        path = Path(override) if override is not None else Path(self.output_dir)
        root = os.getenv(OUTPUT_ROOT_ENV)
        if root and not path.is_absolute():
            path = Path(root) / path
        return path


def _error_key(loc: tuple[Any, ...]) -> str:
    return ".".join(str(part) for part in loc)


def parse_config(raw: Mapping[str, Any]) -> ExperimentConfig:
    """
    Validate a parsed mapping.

    Raises:
        ConfigError: The mapping violates the schema; key points at the first
            offending entry.
    """
    try:
        return ExperimentConfig.model_validate(dict(raw))
    except ValidationError as exc:
        errors = exc.errors(include_url=False, include_input=False, include_context=False)
        first = errors[0]
        key = _error_key(first["loc"])
        raise ConfigError(
            first["msg"],
            key=key or None,
            errors=[{"key": _error_key(e["loc"]), "message": e["msg"]} for e in errors],
        ) from exc


def load_config(path: Path | str) -> ExperimentConfig:
    """
    Read and validate a TOML experiment config.

    Raises:
        ConfigError: The file is unreadable, not valid TOML, or violates the schema.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}", path=str(path), reason=str(exc)) from exc
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}", path=str(path), reason=str(exc)) from exc
    return parse_config(raw)
