"""Synthetic sensor data from a weakened target structure."""
from __future__ import annotations

import numpy as np

from .config import Setup, base_load
from .exceptions import ConfigError
from .fem import SensorSet
from .objective import local_weights
from .stochastic import scale_loads


def nominal_xi(st: Setup) -> np.ndarray:
    sc = st.config.scenario
    if sc.xi:
        xi = np.asarray(sc.xi, dtype=float)
    else:
        xi = np.ones(st.loads.groups.n_groups)
        if st.loads.thermal_random:
            lo, hi = st.config.load.thermal_range
            xi = np.append(xi, 0.5 * (lo + hi))
    if xi.shape != (st.loads.n_params,):
        raise ConfigError(f"scenario.xi needs {st.loads.n_params} entries")
    return xi


def target_loads(st: Setup, xis) -> np.ndarray:
    """Full load vectors (columns) applied to the target structure for each ``xi``."""
    cfg = st.config
    sc = cfg.scenario
    f_base = st.loads.f_base
    if sc.mode == "linear-ramp-target":
        if cfg.load.kind != "surface" or len(sc.ramp) != 2:
            raise ConfigError("linear-ramp-target needs load.kind = 'surface' and scenario.ramp = [a, b]")
        a, b = map(float, sc.ramp)
        f_base = base_load(cfg, st.mesh, lambda X: a + b * X[:, sc.ramp_direction])
    f_th = st.model.thermal(st.true_alpha, 1.0)
    cols = []
    for xi in xis:
        scales, dT = st.loads.split(xi)
        if sc.mode == "thermal-target":
            dT = sc.delta_T
        cols.append(scale_loads(f_base, st.loads.groups, scales) + dT * f_th)
    return np.column_stack(cols)


def synthesize(st: Setup, seed: int | None = None) -> SensorSet:
    """Measured readings (and weights) for ``st.sensors`` on the target structure.

    All randomness comes from one generator seeded with ``seed`` (the config
    seed by default).
    """
    cfg = st.config
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    mesh = st.mesh
    P = st.sensors.selection(mesh, st.model)
    fact = st.model.factorize(st.true_alpha)
    if cfg.scenario.mode == "per-sensor-draw":
        xis = cfg.box().sample(rng, len(st.sensors))
        U = mesh.expand(fact.solve(mesh.reduce(target_loads(st, xis))))
        readings = P @ U
        measured = readings[np.arange(len(st.sensors)), np.arange(len(st.sensors))]
    else:
        U = mesh.expand(fact.solve(mesh.reduce(target_loads(st, [nominal_xi(st)]))))
        measured = (P @ U)[:, 0]
    if cfg.scenario.noise_relative:
        measured = measured * (1.0 + cfg.scenario.noise_relative * rng.standard_normal(measured.shape))
    weights = local_weights(measured) if cfg.weights_mode == "local" else np.ones_like(measured)
    return st.sensors.with_values(measured, weights)
