"""The risk-averse identification problem: forward sweep over the quadrature
grid, risk evaluation and the adjoint gradient."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch, InvalidArgument
from .fem import Factorization, FEModel, SensorSet
from .objective import gradient_alpha, misfit, misfit_gradient_u, smooth
from .risk import CVAR, RiskSpec, SampledRV, cvar_at_t, evaluate_risk, plus_prime, tail_multipliers
from .stochastic import LoadGroups, QuadratureGrid, scale_loads


@dataclass(frozen=True)
class LoadModel:
    """Mechanical base load scaled per group, plus an optional temperature change.

    With ``thermal_random`` the last random parameter is the temperature
    change itself (in K) and ``delta_T`` is ignored.
    """

    f_base: np.ndarray
    groups: LoadGroups
    delta_T: float = 0.0
    thermal_random: bool = False

    @property
    def n_params(self) -> int:
        return self.groups.n_groups + int(self.thermal_random)

    def split(self, xi):
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        if xi.shape != (self.n_params,):
            raise DimensionMismatch(f"xi has {xi.size} entries, load model expects {self.n_params}")
        if self.thermal_random:
            return xi[:-1], float(xi[-1])
        return xi, float(self.delta_T)

    def has_thermal(self) -> bool:
        return self.thermal_random or self.delta_T != 0

    def forces(self, model: FEModel, alpha, xi) -> np.ndarray:
        scales, dT = self.split(xi)
        f = scale_loads(self.f_base, self.groups, scales)
        if dT != 0:
            f = f + model.thermal(alpha, dT)
        return f


@dataclass
class Evaluation:
    alpha: np.ndarray
    objective: float
    samples: SampledRV
    t: float
    U: np.ndarray            # full displacements, one column per quadrature node
    predicted: np.ndarray    # sensor readings, one column per node
    delta_T: np.ndarray
    factorization: Factorization


class Problem:
    """Everything needed to evaluate the risk of the misfit and its gradient.

    Counters ``forward_solves`` and ``adjoint_solves`` count single
    right-hand-side solves; ``factorizations`` counts stiffness
    factorizations.
    """

    def __init__(self, model: FEModel, sensors: SensorSet, loads: LoadModel, grid: QuadratureGrid,
                 risk: RiskSpec, smoothing_steps: int = 4, threads: int = 1):
        if grid.nodes.shape[1] != loads.n_params:
            raise DimensionMismatch(f"grid has dimension {grid.nodes.shape[1]}, load model {loads.n_params}")
        if loads.f_base.shape != (model.mesh.ndof,):
            raise DimensionMismatch("base load must be a full-length dof vector")
        self.model = model
        self.mesh = model.mesh
        self.sensors = sensors
        self.loads = loads
        self.grid = grid
        self.risk = risk
        self.smoothing_steps = smoothing_steps
        self.threads = max(1, int(threads))
        self.selection = sensors.selection(self.mesh, model)
        self.forward_solves = 0
        self.adjoint_solves = 0
        self.factorizations = 0
        self.evaluations = 0

    def with_risk(self, risk: RiskSpec) -> "Problem":
        return Problem(self.model, self.sensors, self.loads, self.grid, risk, self.smoothing_steps, self.threads)

    def _solve_columns(self, fact: Factorization, B: np.ndarray) -> np.ndarray:
        if self.threads == 1 or B.shape[1] < 2 * self.threads:
            return fact.solve(B)
        chunks = np.array_split(np.arange(B.shape[1]), self.threads)
        with ThreadPoolExecutor(self.threads) as pool:
            parts = list(pool.map(lambda c: fact.solve(B[:, c]), chunks))
        return np.concatenate(parts, axis=1)

    def load_matrix(self, alpha) -> tuple:
        """Full load vectors for every grid node (columns) and their temperature changes."""
        n = len(self.grid)
        F = np.empty((self.mesh.ndof, n))
        dT = np.empty(n)
        f_th = self.model.thermal(alpha, 1.0) if self.loads.has_thermal() else None
        for k, xi in enumerate(self.grid.nodes):
            scales, dT[k] = self.loads.split(xi)
            F[:, k] = scale_loads(self.loads.f_base, self.loads.groups, scales)
            if f_th is not None and dT[k] != 0:
                F[:, k] += dT[k] * f_th
        return F, dT

    def evaluate(self, alpha) -> Evaluation:
        alpha = np.asarray(alpha, dtype=float).copy()
        fact = self.model.factorize(alpha)
        self.factorizations += 1
        F, dT = self.load_matrix(alpha)
        U = self.mesh.expand(self._solve_columns(fact, self.mesh.reduce(F)))
        self.forward_solves += F.shape[1]
        self.evaluations += 1
        predicted = self.selection @ U
        samples = SampledRV(misfit(predicted, self.sensors), self.grid.weights)
        value, t, _ = evaluate_risk(samples, self.risk)
        return Evaluation(alpha, value, samples, t, U, predicted, dT, fact)

    def multipliers(self, ev: Evaluation, t: float | None = None) -> np.ndarray:
        if t is None or self.risk.kind != CVAR:
            return evaluate_risk(ev.samples, self.risk)[2]
        return tail_multipliers(ev.samples, self.risk.beta, t, self.risk.tail)

    def gradient(self, ev: Evaluation, smoothed: bool = False, t: float | None = None) -> np.ndarray:
        """Gradient of the objective in ``alpha`` with ``t`` held fixed.

        ``t`` defaults to the optimal threshold found by ``evaluate``.
        """
        mult = self.multipliers(ev, t)
        rhs = self.mesh.reduce(misfit_gradient_u(ev.predicted, self.sensors, self.mesh, self.model))
        active = np.flatnonzero(mult > 0)
        U_adj = np.zeros_like(rhs)
        if active.size:
            U_adj[:, active] = self._solve_columns(ev.factorization, -rhs[:, active] * mult[active])
        self.adjoint_solves += active.size
        dT = ev.delta_T if self.loads.has_thermal() else None
        g = gradient_alpha(self.model, ev.U, self.mesh.expand(U_adj), self.grid.weights, dT)
        return smooth(g, self.mesh, self.smoothing_steps) if smoothed else g

    def objective(self, alpha) -> float:
        return self.evaluate(alpha).objective


def finite_difference_check(problem: Problem, alpha, h_rel: float = 1e-6):
    """Compare the adjoint gradient with central differences, one element at a time.

    For CVaR the threshold is frozen halfway between the optimal ``t`` and
    the next larger sample, so no sample sits on the kink, and the
    differenced quantity is ``cvar_at_t``.  Elements whose perturbation
    still flips a tail activation are skipped (reported as NaN).  Returns
    ``(adjoint, fd, relative_error)`` arrays.
    """
    if not h_rel > 0:
        raise InvalidArgument(f"finite-difference step must be positive, got {h_rel}")
    alpha = np.asarray(alpha, dtype=float)
    ev = problem.evaluate(alpha)
    cvar_mode = problem.risk.kind == CVAR
    t = None
    if cvar_mode:
        above = ev.samples.values[ev.samples.values > ev.t]
        t = 0.5 * (ev.t + above.min()) if above.size else ev.t + 1.0
    g = problem.gradient(ev, t=t)
    active = plus_prime(ev.samples.values - t) if cvar_mode else None
    fd = np.full_like(g, np.nan)
    for e in range(alpha.size):
        h = h_rel * alpha[e]
        vals = []
        for sign in (1.0, -1.0):
            a = alpha.copy()
            a[e] += sign * h
            ev_p = problem.evaluate(a)
            if cvar_mode:
                if np.any(plus_prime(ev_p.samples.values - t) != active):
                    break
                vals.append(cvar_at_t(ev_p.samples, problem.risk.beta, t))
            else:
                vals.append(ev_p.objective)
        if len(vals) == 2:
            fd[e] = (vals[0] - vals[1]) / (2 * h)
    scale = np.nanmax(np.abs(fd)) if np.any(np.isfinite(fd)) else 0.0
    denom = np.maximum(np.abs(fd), 1e-8 * scale)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.abs(g - fd) / denom
    return g, fd, rel
