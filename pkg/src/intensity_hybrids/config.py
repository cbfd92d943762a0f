"""Run configuration: a strict, versioned YAML schema.

Unknown keys are errors and ``schema_version`` must equal
:data:`SCHEMA_VERSION`.  Validation errors carry the YAML line of the
offending key so the CLI can point at it.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from scipy import constants

from .attenuation import AttenuationKind, AttenuationMode
from .fields import CoherenceMode
from .packets import ExperimentSetup, build_setup
from .trajectories import IntegratorConfig

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SetupConfig(_Strict):
    """Geometry in SI units; ``sideways_screen_x`` defaults to ``3 d``."""

    particle_mass: float = Field(constants.m_n, gt=0)
    wavelength: float = Field(1.8e-9, gt=0)
    slit_separation: float = Field(200e-6, ge=0)
    slit_width_sigma: float = Field(22e-6, gt=0)
    forward_screen_distance: float = Field(5.0, gt=0)
    sideways_screen_x: float | None = None

    def build(self) -> ExperimentSetup:
        return build_setup(**self.model_dump())


class AttenuationConfig(_Strict):
    modes: list[Literal["none", "stochastic", "deterministic"]] = ["stochastic"]
    a_values: list[float] = Field(default_factory=lambda: [1.0], min_length=1)

    @field_validator("a_values")
    @classmethod
    def _in_unit_interval(cls, v):
        for a in v:
            if not 0.0 <= a <= 1.0:
                raise ValueError(f"transmission factor {a} outside [0, 1]")
        return v

    def mode_list(self, a: float) -> list[AttenuationMode]:
        out = []
        for m in self.modes:
            if m == "none":
                out.append(AttenuationMode.none())
            else:
                out.append(AttenuationMode(AttenuationKind(m), a))
        return out


class TrajectoryConfig(_Strict):
    n_per_slit: int = Field(200, ge=1)
    sampler: Literal["quantile", "random"] = "quantile"
    seed: int = 0


class IntegratorSettings(_Strict):
    rel_tol: float = Field(1e-8, gt=0)
    abs_tol: float = Field(1e-9, gt=0)
    max_step: float = Field(0.25, gt=0, description="internal time units")
    initial_step: float = Field(1e-3, gt=0)
    density_floor: float = Field(1e-300, gt=0)
    max_time: float | None = Field(None, gt=0, description="seconds; default is the time to the forward screen")
    node_strikes: int = Field(40, ge=1)
    max_steps: int = Field(200_000, ge=1)

    def build(self, setup: ExperimentSetup) -> IntegratorConfig:
        kwargs = self.model_dump()
        if self.max_time is not None:
            kwargs["max_time"] = float(setup.to_internal_time(self.max_time))
        return IntegratorConfig(**kwargs)


class ScreenConfig(_Strict):
    """Bin widths in SI (m for forward ``x``, m for sideways ``y``)."""

    forward_bin_width: float = Field(5e-6, gt=0)
    sideways_bin_width: float | None = Field(None, gt=0)
    density_weighted: bool = False


class ProfileConfig(_Strict):
    grid_points: int = Field(4001, ge=3)
    half_widths: float = Field(10.0, gt=0)
    visibility_bin_width: float = Field(0.05, gt=0, description="in units of sigma0")
    phase_steps: int = Field(8, ge=3)


class HeatmapConfig(_Strict):
    enabled: bool = True
    nx: int = Field(201, ge=2)
    nt: int = Field(101, ge=2)


class VerifyConfig(_Strict):
    a_values: list[float] = Field(default_factory=lambda: [1.0, 0.25, 1e-4, 1e-8])
    continuity_a_values: list[float] = Field(default_factory=lambda: [1.0, 1e-8])
    grid_points: int = Field(10_000, ge=10)
    times_tau: list[float] = Field(default_factory=lambda: [0.1, 1.0])
    include_screen_time: bool = True
    density_rtol: float = Field(1e-10, gt=0)
    velocity_rtol: float = Field(1e-8, gt=0)
    continuity_rtol: float = Field(1e-4, gt=0)


class RunConfig(_Strict):
    schema_version: int
    setup: SetupConfig = SetupConfig()
    attenuation: AttenuationConfig = AttenuationConfig()
    coherence: list[Literal["coherent", "incoherent"]] = ["coherent"]
    trajectories: TrajectoryConfig = TrajectoryConfig()
    integrator: IntegratorSettings = IntegratorSettings()
    screens: ScreenConfig = ScreenConfig()
    profile: ProfileConfig = ProfileConfig()
    heatmap: HeatmapConfig = HeatmapConfig()
    verify: VerifyConfig = VerifyConfig()

    @field_validator("schema_version")
    @classmethod
    def _version(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v}; this build reads {SCHEMA_VERSION}")
        return v

    @model_validator(mode="after")
    def _nonempty(self):
        if not self.coherence:
            raise ValueError("coherence must list at least one mode")
        if not self.attenuation.modes:
            raise ValueError("attenuation.modes must list at least one mode")
        return self

    def coherence_modes(self) -> list[CoherenceMode]:
        return [CoherenceMode(c) for c in self.coherence]

    def digest(self) -> str:
        canon = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


class ConfigError(ValueError):
    """Invalid configuration; ``issues`` holds ``(line, location, message)`` tuples."""

    def __init__(self, source: str, issues: list[tuple[int | None, str, str]]):
        self.source = source
        self.issues = issues
        lines = [f"{source}:{line if line is not None else '?'}: {loc}: {msg}"
                 for line, loc, msg in issues]
        super().__init__("\n".join(lines))


def _line_of(node, loc) -> int | None:
    """1-based line of the deepest YAML node reachable along ``loc``."""
    line = node.start_mark.line + 1 if node is not None else None
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            nxt = next(((k, v) for k, v in node.value if k.value == str(key)), None)
            if nxt is None:
                break
            line = nxt[0].start_mark.line + 1
            node = nxt[1]
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            break
    return line


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        data = yaml.safe_load(text)
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(source, [(mark.line + 1 if mark else None, "yaml", str(exc))]) from exc
    if not isinstance(data, dict):
        raise ConfigError(source, [(1, "root", "config must be a mapping")])
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        issues = []
        for err in exc.errors():
            loc = tuple(err["loc"])
            issues.append((_line_of(root, loc), ".".join(map(str, loc)) or "root", err["msg"]))
        raise ConfigError(source, issues) from exc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(path), [(None, "file", str(exc))]) from exc
    return parse_config(text, str(path))
