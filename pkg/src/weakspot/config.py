"""Experiment configuration (TOML) and problem construction.

A config file fully specifies one experiment.  Recognized tables and keys::

    seed = 0
    [mesh]        generator = "plate" | "truss" | "ten_bar" | "chain" | "file"
                  path, nx, ny, length, height, thickness, clamp,
                  bays, bay_length, area, dim, n_bars
    [material]    E, nu, rho, alpha_exp
    [load]        kind = "surface" | "tip" | "nodes" | "none"
                  direction, magnitude, nodes = [[node, comp, value], ...]
                  delta_T, thermal_range = [lo, hi]
    [load_groups] direction, count
    [xi]          intervals = [[a, b], ...]   (one per load group)
    [quadrature]  order
    [risk]        kind = "expectation" | "cvar", beta, tail = "exact" | "indicator"
    [smoothing]   steps
    [weights]     mode = "local" | "unit"
    [optimizer]   any field of OptConfig
    [sensors]     layout = "boundary" | "grid" | "all" | "nodes" | "file"
                  stride, components, nodes, path
    [scenario]    mode, weak_alpha, weak_elements, weak_box, weak_circle,
                  xi, ramp, ramp_direction, delta_T, noise_relative

Relative ``path`` entries resolve against the config file's directory.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .exceptions import ConfigError
from .fem import FEModel, Material, Mesh, SensorSet
from .meshes import (bar_chain, boundary_nodes, cantilever_truss, dof_coordinates, nodal_load, plate_mesh,
                     surface_load, ten_bar_truss, tip_load)
from .optimizer import OptConfig
from .problem import LoadModel, Problem
from .risk import RiskSpec
from .stochastic import LoadGroups, ParamBox, tensor_grid

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCENARIO_MODES = ("per-sensor-draw", "deterministic-target", "linear-ramp-target", "thermal-target")


@dataclass
class MeshSpec:
    generator: str = "plate"
    path: str = ""
    nx: int = 20
    ny: int = 10
    length: float = 60.0
    height: float = 30.0
    thickness: float = 0.1
    clamp: str = "top"
    bays: int = 10
    bay_length: float = 1.0
    area: float = 5e-4
    dim: int = 3
    n_bars: int = 2


@dataclass
class LoadSpec:
    kind: str = "surface"
    direction: int = 1
    magnitude: float = -4e5
    nodes: list = field(default_factory=list)
    delta_T: float = 0.0
    thermal_range: list = field(default_factory=list)


@dataclass
class SensorSpec:
    layout: str = "boundary"
    stride: int = 2
    components: list = field(default_factory=lambda: [0, 1])
    nodes: list = field(default_factory=list)
    path: str = ""


@dataclass
class ScenarioSpec:
    """How the synthetic measurements are produced.

    ``per-sensor-draw`` takes each sensor's reading from its own solve with
    an independent uniform draw of the random parameters; the other modes
    use a single solve.
    """

    mode: str = "deterministic-target"
    weak_alpha: float = 0.1
    weak_elements: list = field(default_factory=list)
    weak_box: list = field(default_factory=list)
    weak_circle: list = field(default_factory=list)
    xi: list = field(default_factory=list)
    ramp: list = field(default_factory=list)
    ramp_direction: int = 0
    delta_T: float = 0.0
    noise_relative: float = 0.0

    def __post_init__(self):
        if self.mode not in SCENARIO_MODES:
            raise ConfigError(f"unknown scenario mode {self.mode!r}; expected one of {SCENARIO_MODES}")
        if not self.weak_alpha >= 1e-3:
            raise ConfigError("weak_alpha must be at least eps_alpha")


@dataclass
class ProblemConfig:
    mesh: MeshSpec = field(default_factory=MeshSpec)
    material: Material = field(default_factory=lambda: Material(E=2e9, nu=0.3, rho=7.8, alpha_exp=11e-6))
    load: LoadSpec = field(default_factory=LoadSpec)
    group_direction: int = 0
    group_count: int = 1
    xi_intervals: list = field(default_factory=list)
    quadrature_order: int = 4
    risk: RiskSpec = field(default_factory=RiskSpec)
    smoothing_steps: int = 4
    weights_mode: str = "local"
    optimizer: OptConfig = field(default_factory=OptConfig)
    sensors: SensorSpec = field(default_factory=SensorSpec)
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    seed: int = 0
    base_dir: Path = field(default_factory=Path.cwd)

    def box(self) -> ParamBox:
        intervals = [tuple(iv) for iv in self.xi_intervals] or [(0.8, 1.2)] * self.group_count
        if len(intervals) != self.group_count:
            raise ConfigError(f"{len(intervals)} xi intervals for {self.group_count} load groups")
        if self.load.thermal_range:
            intervals.append(tuple(self.load.thermal_range))
        return ParamBox(intervals)


def _build(cls, table, section):
    table = dict(table or {})
    known = {f.name for f in fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    try:
        return cls(**table)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def config_from_dict(data: dict, base_dir=None) -> ProblemConfig:
    data = dict(data)
    allowed = {"seed", "mesh", "material", "load", "load_groups", "xi", "quadrature", "risk", "smoothing",
               "weights", "optimizer", "sensors", "scenario"}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    cfg = ProblemConfig(base_dir=Path(base_dir) if base_dir else Path.cwd())
    cfg.seed = int(data.get("seed", 0))
    cfg.mesh = _build(MeshSpec, data.get("mesh"), "mesh")
    if "material" in data:
        cfg.material = _build(Material, {**{"E": 2e9, "nu": 0.3, "rho": 7.8, "alpha_exp": 11e-6},
                                         **data["material"]}, "material")
    cfg.load = _build(LoadSpec, data.get("load"), "load")
    lg = dict(data.get("load_groups", {}))
    cfg.group_direction = int(lg.pop("direction", 0))
    cfg.group_count = int(lg.pop("count", 1))
    if lg:
        raise ConfigError(f"unknown keys in [load_groups]: {sorted(lg)}")
    cfg.xi_intervals = [list(map(float, iv)) for iv in data.get("xi", {}).get("intervals", [])]
    cfg.quadrature_order = int(data.get("quadrature", {}).get("order", 4))
    cfg.risk = _build(RiskSpec, data.get("risk"), "risk")
    cfg.smoothing_steps = int(data.get("smoothing", {}).get("steps", 4))
    cfg.weights_mode = data.get("weights", {}).get("mode", "local")
    if cfg.weights_mode not in ("local", "unit"):
        raise ConfigError("weights.mode must be 'local' or 'unit'")
    cfg.optimizer = _build(OptConfig, data.get("optimizer"), "optimizer")
    cfg.sensors = _build(SensorSpec, data.get("sensors"), "sensors")
    cfg.scenario = _build(ScenarioSpec, data.get("scenario"), "scenario")
    cfg.box()
    return cfg


def load_config(path) -> ProblemConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data, path.parent)


def _resolve(cfg: ProblemConfig, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else cfg.base_dir / path


def build_mesh(cfg: ProblemConfig):
    """Returns ``(mesh, sensors_from_file_or_None)``."""
    m = cfg.mesh
    if m.generator == "plate":
        return plate_mesh(m.nx, m.ny, m.length, m.height, m.thickness, m.clamp), None
    if m.generator == "truss":
        return cantilever_truss(m.bays, m.bay_length, m.height, m.area, m.dim), None
    if m.generator == "ten_bar":
        return ten_bar_truss(m.bay_length, m.height, m.area), None
    if m.generator == "chain":
        return bar_chain(m.n_bars, m.length, m.area, 2, ("left",) if m.clamp == "left" else ("left", "right")), None
    if m.generator == "file":
        from .io import read_mesh
        if not m.path:
            raise ConfigError("mesh.generator = 'file' needs mesh.path")
        path = _resolve(cfg, m.path)
        if not path.exists():
            raise ConfigError(f"mesh file {path} does not exist")
        return read_mesh(path)
    raise ConfigError(f"unknown mesh generator {m.generator!r}")


def base_load(cfg: ProblemConfig, mesh: Mesh, magnitude=None) -> np.ndarray:
    """Nominal mechanical load; ``magnitude`` overrides the configured one (may be callable)."""
    ld = cfg.load
    mag = ld.magnitude if magnitude is None else magnitude
    if ld.kind == "surface":
        return surface_load(mesh, ld.direction, mag)
    if ld.kind == "tip":
        return tip_load(mesh, ld.direction, mag)
    if ld.kind == "nodes":
        return nodal_load(mesh, ld.nodes)
    if ld.kind == "none":
        return np.zeros(mesh.ndof)
    raise ConfigError(f"unknown load kind {ld.kind!r}")


def load_model(cfg: ProblemConfig, mesh: Mesh) -> LoadModel:
    f = base_load(cfg, mesh)
    groups = LoadGroups.uniform_slabs(f, dof_coordinates(mesh), cfg.group_direction, cfg.group_count)
    return LoadModel(f, groups, cfg.load.delta_T, bool(cfg.load.thermal_range))


def sensor_layout(cfg: ProblemConfig, mesh: Mesh) -> SensorSet:
    s = cfg.sensors
    if s.layout == "file":
        from .io import read_sensors_csv
        return read_sensors_csv(_resolve(cfg, s.path))
    comps = [c for c in s.components if c < mesh.dim]
    fixed = set(mesh.dirichlet)
    free = [n for n in range(mesh.n_nodes) if any((n, c) not in fixed for c in comps)]
    if s.layout == "boundary":
        on_boundary = set(boundary_nodes(mesh).tolist())
        nodes = [n for n in free if n in on_boundary][::max(1, s.stride)]
    elif s.layout == "all":
        nodes = free
    elif s.layout == "grid":
        nodes = free[::max(1, s.stride)]
    elif s.layout == "nodes":
        nodes = list(s.nodes)
    else:
        raise ConfigError(f"unknown sensor layout {s.layout!r}")
    pairs = [(n, c) for n in nodes for c in comps if (n, c) not in fixed]
    if not pairs:
        raise ConfigError("sensor layout selects no free dofs")
    return SensorSet.displacements(pairs)


def weak_alpha_field(cfg: ProblemConfig, mesh: Mesh) -> np.ndarray:
    sc = cfg.scenario
    alpha = np.ones(mesh.n_elements)
    weak = np.zeros(mesh.n_elements, dtype=bool)
    if sc.weak_elements:
        weak[np.asarray(sc.weak_elements, dtype=int)] = True
    c = mesh.centroids
    if sc.weak_box:
        box = np.asarray(sc.weak_box, dtype=float).reshape(-1, 2)
        inside = np.all((c[:, :len(box)] >= box[:, 0]) & (c[:, :len(box)] <= box[:, 1]), axis=1)
        weak |= inside
    if sc.weak_circle:
        *center, radius = sc.weak_circle
        weak |= np.linalg.norm(c[:, :len(center)] - np.asarray(center), axis=1) <= radius
    alpha[weak] = sc.weak_alpha
    return alpha


@dataclass
class Setup:
    """Built pieces of one experiment, before measurements are attached."""

    config: ProblemConfig
    mesh: Mesh
    model: FEModel
    loads: LoadModel
    sensors: SensorSet
    true_alpha: np.ndarray


def setup(cfg: ProblemConfig) -> Setup:
    mesh, file_sensors = build_mesh(cfg)
    model = FEModel(mesh, cfg.material)
    loads = load_model(cfg, mesh)
    if cfg.sensors.layout == "file" or (file_sensors is None):
        sensors = sensor_layout(cfg, mesh)
    else:
        sensors = file_sensors
    return Setup(cfg, mesh, model, loads, sensors, weak_alpha_field(cfg, mesh))


def make_problem(st: Setup, sensors: SensorSet, risk: RiskSpec | None = None, threads: int = 1) -> Problem:
    cfg = st.config
    grid = tensor_grid(cfg.box(), cfg.quadrature_order)
    return Problem(st.model, sensors, st.loads, grid, risk or cfg.risk, cfg.smoothing_steps, threads)
