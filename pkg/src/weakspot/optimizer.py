"""Projected steepest descent on the strength field with Armijo backtracking."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import LineSearchFailed
from .objective import smooth
from .problem import Evaluation, Problem

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("iter", "objective", "t", "step", "grad_norm", "backtracks")


@dataclass(frozen=True)
class OptConfig:
    max_iters: int = 200
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 40
    initial_change: float = 0.1   # max |d alpha| of the very first trial step
    step_growth: float = 2.0
    eps_alpha: float = 1e-3
    alpha_max: float = 1.0
    tol_rel_objective: float = 1e-8
    stall_window: int = 10
    tol_abs_objective: float = 1e-16
    raise_on_failure: bool = False

    def __post_init__(self):
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0 < self.eps_alpha <= self.alpha_max:
            raise ValueError("need 0 < eps_alpha <= alpha_max")


@dataclass
class OptState:
    alpha: np.ndarray
    t: float
    objective: float
    iteration: int = 0
    step_length: float = 0.0
    history: list = field(default_factory=list)
    stalled: bool = False
    status: str = "running"
    evaluation: Evaluation | None = field(default=None, repr=False)
    gradient: np.ndarray | None = field(default=None, repr=False)


def project(alpha, config: OptConfig) -> np.ndarray:
    return np.clip(alpha, config.eps_alpha, config.alpha_max)


def _feasible(d, alpha, config: OptConfig) -> np.ndarray:
    """Drop components that would push an iterate already on a bound further out."""
    out = (alpha <= config.eps_alpha) & (d < 0) | (alpha >= config.alpha_max) & (d > 0)
    return np.where(out, 0.0, d)


def evaluate(problem: Problem, alpha) -> Evaluation:
    """Objective, misfit samples, ``t`` and states at ``alpha`` (see :meth:`Problem.evaluate`)."""
    return problem.evaluate(alpha)


def initial_state(problem: Problem, alpha, config: OptConfig) -> OptState:
    alpha = project(np.asarray(alpha, dtype=float), config)
    ev = problem.evaluate(alpha)
    g = problem.gradient(ev)
    state = OptState(alpha, ev.t, ev.objective, evaluation=ev, gradient=g)
    state.history.append((0, ev.objective, ev.t, 0.0, float(np.linalg.norm(g)), 0))
    return state


def step(problem: Problem, state: OptState, config: OptConfig) -> OptState:
    """One projected descent iteration along the negative smoothed gradient.

    Raises :class:`LineSearchFailed` if no trial point decreases the
    objective within ``max_backtracks`` halvings.
    """
    if state.evaluation is None:
        state = replace(state, evaluation=problem.evaluate(state.alpha))
    if state.gradient is None:
        state = replace(state, gradient=problem.gradient(state.evaluation))
    g = state.gradient
    d = _feasible(-smooth(g, problem.mesh, problem.smoothing_steps), state.alpha, config)
    if np.dot(g, d) >= 0:
        # smoothing plus the bound projection can rotate past 90 degrees
        d = _feasible(-g, state.alpha, config)
    dmax = np.max(np.abs(d)) if d.size else 0.0
    if dmax == 0 or not np.isfinite(dmax):
        return replace(state, stalled=True, status="stalled")

    if state.step_length > 0:
        s = min(config.step_growth * state.step_length, 1.0 / dmax)
    else:
        s = config.initial_change / dmax

    J0 = state.objective
    for backtracks in range(config.max_backtracks + 1):
        trial = project(state.alpha + s * d, config)
        dalpha = trial - state.alpha
        if np.any(dalpha != 0):
            ev = problem.evaluate(trial)
            slope = min(float(np.dot(g, dalpha)), 0.0)
            if ev.objective < J0 and ev.objective <= J0 + config.armijo_c * slope:
                g_new = problem.gradient(ev)
                hist = list(state.history)
                hist.append((state.iteration + 1, ev.objective, ev.t, s,
                             float(np.linalg.norm(g_new)), backtracks))
                return OptState(trial, ev.t, ev.objective, state.iteration + 1, s, hist,
                                evaluation=ev, gradient=g_new)
        s *= config.backtrack_factor
    raise LineSearchFailed(f"no decrease after {config.max_backtracks} backtracks at iteration {state.iteration}")


def run(problem: Problem, config: OptConfig = OptConfig(), alpha0=None, callback=None) -> OptState:
    """Iterate from ``alpha0`` (all ones by default) until a stopping rule fires.

    Stops when the objective is below ``tol_abs_objective``, when the relative
    decrease stays under ``tol_rel_objective`` for ``stall_window``
    consecutive iterations, on a zero gradient, on a failed line search, or
    after ``max_iters``.  The reason is left in ``state.status``.
    """
    if alpha0 is None:
        alpha0 = np.ones(problem.mesh.n_elements)
    state = initial_state(problem, alpha0, config)
    small = 0
    while True:
        if state.objective <= config.tol_abs_objective:
            state.status = "converged"
            break
        if state.iteration >= config.max_iters:
            state.status = "max_iters"
            break
        previous = state.objective
        try:
            state = step(problem, state, config)
        except LineSearchFailed as exc:
            if config.raise_on_failure:
                raise
            log.info("%s", exc)
            state.status = "line_search_failed"
            break
        if state.stalled:
            break
        if callback is not None:
            callback(state)
        log.debug("iter %d objective %.6e step %.3e", state.iteration, state.objective, state.step_length)
        rel = (previous - state.objective) / abs(previous) if previous else 0.0
        small = small + 1 if rel < config.tol_rel_objective else 0
        if small >= config.stall_window:
            state.status = "converged"
            break
    return state
