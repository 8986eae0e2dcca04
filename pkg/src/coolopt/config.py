"""Run configuration: a JSON document of named blocks, every key optional.

Missing keys take the defaults below; unknown keys are rejected so typos do
not silently fall back to defaults.  ``RunConfig.to_dict`` returns the fully
resolved configuration, which is what the run manifest records.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ArtifactError, ConfigError
from .flow import FlowSettings
from .geometry import ComponentBounds, ComponentSet, initial_layout
from .materials import PhysicalProperties, RampParameters
from .mesh import StructuredMesh, build_mesh
from .mma import ConvergenceCriteria, MmaSettings

MODES = ("two_stage", "simultaneous", "density_baseline", "reoptimize_walls")


@dataclass
class DomainConfig:
    Lx: float = 10e-3
    Ly: float = 7e-3
    nx: int = 120
    ny: int = 84
    inlet: tuple[float, float] = (0.80, 0.95)
    outlet: tuple[float, float] = (0.05, 0.20)


@dataclass
class RampConfig:
    """Endpoints not given here are derived from the properties (see ``RampParameters.defaults``)."""

    channel_half_height: float = 1.0e-4
    darcy: float = 1e-9
    q_f: float = 10.0
    q_k: float = 1.0
    q_h: float = 1.0
    q_H: float = 1.0
    alpha_f: float | None = None
    alpha_s: float | None = None
    h_f: float | None = None
    h_s: float | None = None


@dataclass
class LayoutConfig:
    walls_grid: tuple[int, int] = (2, 3)
    fins_grid: tuple[int, int] = (6, 4)
    wall_half_length: float = 0.12
    wall_half_thickness: float = 0.03
    angle_pattern: str = "horizontal"
    fin_semi_major: float = 0.02
    fin_axis_ratio: float = 0.5
    fin_angle: float = 0.0
    # seeded uniform perturbation of wall centers, as a fraction of Lx
    jitter: float = 0.0


@dataclass
class ProjectionConfig:
    beta: float = 8.0
    # width of the smoothed projection in element sizes; null = pointwise tanh
    smoothing_width: float | None = 0.5


@dataclass
class BoundsConfig:
    L: tuple[float, float] = (0.02, 0.45)
    t: tuple[float, float] = (0.01, 0.10)
    a: tuple[float, float] = (0.005, 0.06)
    k: tuple[float, float] = (0.2, 1.0)
    wall_angle: tuple[float, float] = (-np.pi / 2, np.pi / 2)
    fin_angle: tuple[float, float] = (-np.pi / 2, np.pi / 2)


@dataclass
class ThresholdConfig:
    wall_frac: float = 0.2
    d_min: float | None = None  # default: upper bound of the fin semi-major axis
    a_min_keep: float | None = None  # default: two element widths


@dataclass
class SolverConfig:
    newton_tol: float = 1e-8
    max_newton: int = 25
    continuation: tuple[float, ...] = (0.25, 0.5, 1.0)
    flip_exchange_sign: bool = False
    release_backflow: bool = True


@dataclass
class OptimizerConfig:
    tol_dx: float = 1e-3
    max_iters: int = 200
    move: float = 0.1
    asyinit: float = 0.5
    asydecr: float = 0.7
    asyincr: float = 1.2


@dataclass
class DensityConfig:
    initial: float = 1.0
    filter_radius: float | None = None  # in element sizes; null = no filter
    # MMA move limit for densities; null = optimizer.move.  Near gamma = 1 the
    # RAMP resistance is steep, so a uniform step of 0.05 already chokes the flow.
    move: float | None = 0.02


@dataclass
class OutputConfig:
    snapshot_every: int = 0  # extra snapshots every N iterations; 0 = stage boundaries only


@dataclass
class RunConfig:
    mode: str = "two_stage"
    p_in: float = 200.0
    T_in: float = 303.0
    p_exponent: float = 10.0
    seed: int = 0
    prior_run: str | None = None  # reoptimize_walls reads the final design from here
    domain: DomainConfig = field(default_factory=DomainConfig)
    properties: PhysicalProperties = field(default_factory=PhysicalProperties)
    ramp: RampConfig = field(default_factory=RampConfig)
    layout: LayoutConfig = field(default_factory=LayoutConfig)
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    bounds: BoundsConfig = field(default_factory=BoundsConfig)
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    density: DensityConfig = field(default_factory=DensityConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        self.validate()

    # -- construction ------------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        return _build(cls, data, "config")

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ArtifactError(f"cannot read config {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    def updated(self, **changes) -> "RunConfig":
        data = self.to_dict()
        for key, value in changes.items():
            node = data
            *path, last = key.split(".")
            for part in path:
                node = node[part]
            node[last] = value
        return RunConfig.from_dict(data)

    # -- validation --------------------------------------------------------
    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not np.isfinite(self.p_in) or self.p_in < 0:
            raise ConfigError("p_in must be a finite non-negative pressure")
        if not self.T_in > 0:
            raise ConfigError("T_in must be positive (kelvin)")
        if self.p_exponent < 1:
            raise ConfigError("p_exponent must be >= 1")
        d = self.domain
        if not (d.Lx > 0 and d.Ly > 0):
            raise ConfigError("domain dimensions must be positive")
        if d.nx < 8 or d.ny < 8:
            raise ConfigError("mesh needs at least 8 elements per direction")
        if self.projection.beta <= 0:
            raise ConfigError("projection.beta must be positive")
        w = self.projection.smoothing_width
        if w is not None and not w > 0:
            raise ConfigError("projection.smoothing_width must be positive or null")
        t = self.thresholds
        if not 0 < t.wall_frac < 1:
            raise ConfigError("thresholds.wall_frac must lie in (0, 1)")
        if t.d_min is not None and t.d_min < 0:
            raise ConfigError("thresholds.d_min must be non-negative")
        if t.a_min_keep is not None and not t.a_min_keep > 0:
            raise ConfigError("thresholds.a_min_keep must be positive")
        if min(self.layout.walls_grid) < 0 or min(self.layout.fins_grid) < 0:
            raise ConfigError("layout grids must be non-negative")
        if self.layout.jitter < 0:
            raise ConfigError("layout.jitter must be non-negative")
        if self.density.filter_radius is not None and not self.density.filter_radius > 0:
            raise ConfigError("density.filter_radius must be positive or null")
        if self.density.move is not None and not 0 < self.density.move <= 1:
            raise ConfigError("density.move must lie in (0, 1] or be null")
        if not 0 <= self.density.initial <= 1:
            raise ConfigError("density.initial must lie in [0, 1]")
        if self.mode == "reoptimize_walls" and not self.prior_run:
            raise ConfigError("reoptimize_walls needs prior_run (a two-stage output directory)")
        if self.output.snapshot_every < 0:
            raise ConfigError("output.snapshot_every must be >= 0")
        cont = tuple(self.solver.continuation)
        if not cont or cont[-1] != 1.0 or any(b <= a for a, b in zip(cont, cont[1:])):
            raise ConfigError("solver.continuation must increase to 1.0")
        # surface the remaining checks of the typed objects as config errors
        for build in (self.mma_settings, self.criteria, self.flow_settings, self.ramp_parameters,
                      self.component_bounds):
            try:
                build()
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc

    # -- typed views -------------------------------------------------------
    def mesh(self) -> StructuredMesh:
        d = self.domain
        return build_mesh(d.Lx, d.Ly, d.nx, d.ny, tuple(d.inlet), tuple(d.outlet))

    def ramp_parameters(self) -> RampParameters:
        r = self.ramp
        overrides = {k: getattr(r, k) for k in ("q_f", "q_k", "q_h", "q_H")}
        overrides.update({k: getattr(r, k) for k in ("alpha_f", "alpha_s", "h_f", "h_s")
                          if getattr(r, k) is not None})
        return RampParameters.defaults(self.properties, self.domain.Lx, r.channel_half_height,
                                       r.darcy, **overrides)

    def component_bounds(self) -> ComponentBounds:
        b = self.bounds
        return ComponentBounds.defaults(self.domain.Lx, self.domain.Ly, tuple(b.L), tuple(b.t),
                                        tuple(b.a), tuple(b.k), tuple(b.wall_angle), tuple(b.fin_angle))

    def initial_components(self) -> ComponentSet:
        lay, d = self.layout, self.domain
        cset = initial_layout(d.Lx, d.Ly, tuple(lay.walls_grid), tuple(lay.fins_grid), lay.wall_half_length,
                              lay.wall_half_thickness, lay.angle_pattern, lay.fin_semi_major,
                              lay.fin_axis_ratio, lay.fin_angle, self.projection.beta)
        if lay.jitter > 0 and cset.walls:
            rng = np.random.default_rng(self.seed)
            bounds = self.component_bounds()
            shift = rng.uniform(-lay.jitter, lay.jitter, size=(len(cset.walls), 2)) * d.Lx
            walls = tuple(replace(w, x0=float(np.clip(w.x0 + dx, *bounds.x0)),
                                  y0=float(np.clip(w.y0 + dy, *bounds.y0)))
                          for w, (dx, dy) in zip(cset.walls, shift))
            cset = replace(cset, walls=walls)
        return cset

    def smoothing_width(self, mesh: StructuredMesh) -> float | None:
        w = self.projection.smoothing_width
        return None if w is None else w * mesh.h

    def d_min(self) -> float:
        if self.thresholds.d_min is not None:
            return self.thresholds.d_min
        return self.bounds.a[1] * self.domain.Lx

    def a_min_keep(self, mesh: StructuredMesh) -> float:
        if self.thresholds.a_min_keep is not None:
            return self.thresholds.a_min_keep
        return 2.0 * mesh.dx

    def flow_settings(self) -> FlowSettings:
        s = self.solver
        if not (s.newton_tol > 0 and s.max_newton >= 1):
            raise ValueError("solver.newton_tol must be > 0 and solver.max_newton >= 1")
        return FlowSettings(s.newton_tol, s.max_newton, tuple(s.continuation))

    def mma_settings(self) -> MmaSettings:
        o = self.optimizer
        return MmaSettings(asyinit=o.asyinit, asydecr=o.asydecr, asyincr=o.asyincr, move=o.move)

    def criteria(self) -> ConvergenceCriteria:
        return ConvergenceCriteria(self.optimizer.tol_dx, self.optimizer.max_iters)


def _build(cls, data: dict, where: str):
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = known[name].default_factory() if callable(known[name].default_factory) else None
        if is_dataclass(default):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}.{name} must be an object")
            kwargs[name] = _build(type(default), value, f"{where}.{name}")
        else:
            kwargs[name] = tuple(value) if isinstance(value, list) else value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


_JSON_TYPES = {"int": "integer", "float": "number", "str": "string", "bool": "boolean"}


def _schema_for(cls, instance) -> dict:
    props = {}
    for f in fields(cls):
        value = getattr(instance, f.name)
        if is_dataclass(value):
            props[f.name] = _schema_for(type(value), value)
            continue
        entry: dict = {"default": json.loads(json.dumps(value))}
        ann = str(f.type)
        kinds = [_JSON_TYPES[t.strip()] for t in ann.split("|") if t.strip() in _JSON_TYPES]
        if ann.startswith("tuple"):
            kinds = ["array"]
        if "None" in ann:
            kinds.append("null")
        if f.name == "mode" and cls is RunConfig:
            entry["enum"] = list(MODES)
        if kinds:
            entry["type"] = kinds[0] if len(kinds) == 1 else kinds
        props[f.name] = entry
    return {"type": "object", "additionalProperties": False, "properties": props}


def config_schema() -> dict:
    """JSON schema of the configuration file, defaults included."""
    schema = _schema_for(RunConfig, RunConfig())
    schema["$schema"] = "https://json-schema.org/draft/2020-12/schema"
    schema["title"] = "coolopt run configuration"
    return schema
