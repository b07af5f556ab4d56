"""Expectation and conditional value-at-risk of sampled random variables.

CVaR uses the Rockafellar-Uryasev form

    CVaR_beta[X] = min_t  t + E[(X - t)_+] / (1 - beta)

evaluated on weighted samples; the minimizing ``t`` is the weighted
beta-quantile (the value-at-risk).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EXPECTATION = "expectation"
CVAR = "cvar"
TAIL_EXACT = "exact"
TAIL_INDICATOR = "indicator"


@dataclass(frozen=True)
class RiskSpec:
    """Risk measure applied to the misfit samples.

    ``tail`` selects how the sample sitting exactly at ``t`` enters the
    CVaR gradient: ``indicator`` gives it full tail weight (the
    ``(x)_+' = 1`` at 0 convention), ``exact`` gives it the share of tail
    mass it actually carries, which is the derivative of the sampled CVaR.
    """

    kind: str = EXPECTATION
    beta: float = 0.5
    tail: str = TAIL_EXACT

    def __post_init__(self):
        if self.kind not in (EXPECTATION, CVAR):
            raise ValueError(f"unknown risk kind {self.kind!r}")
        if self.kind == CVAR and not 0 < self.beta < 1:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if self.tail not in (TAIL_EXACT, TAIL_INDICATOR):
            raise ValueError(f"unknown tail weighting {self.tail!r}")


@dataclass(frozen=True)
class SampledRV:
    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if v.shape != w.shape or v.ndim != 1:
            raise ValueError("values and weights must be 1-D arrays of equal length")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)

    @classmethod
    def equal(cls, values) -> "SampledRV":
        values = np.asarray(values, dtype=float)
        return cls(values, np.full(values.shape, 1.0 / values.size))

    def mean(self) -> float:
        return float(np.dot(self.weights, self.values))


def plus(x):
    return np.maximum(x, 0.0)


def plus_prime(x):
    """Generalized derivative of ``max(x, 0)``, taken as 1 at ``x == 0``."""
    return np.where(np.asarray(x) >= 0, 1.0, 0.0)


def _check_beta(beta):
    if not 0 < beta < 1:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")


def cvar_at_t(rv: SampledRV, beta: float, t: float) -> float:
    _check_beta(beta)
    return float(t + np.dot(rv.weights, plus(rv.values - t)) / (1.0 - beta))


def optimal_t(rv: SampledRV, beta: float) -> float:
    """Smallest sample whose cumulative weight reaches ``beta``."""
    _check_beta(beta)
    order = np.argsort(rv.values, kind="stable")
    cum = np.cumsum(rv.weights[order])
    # guards cum[-1] falling a few ulps short of 1
    k = min(int(np.searchsorted(cum, beta * cum[-1] * (1 - 1e-14), side="left")), len(cum) - 1)
    return float(rv.values[order[k]])


def cvar(rv: SampledRV, beta: float):
    """Return ``(CVaR_beta, t_star)``."""
    t = optimal_t(rv, beta)
    return cvar_at_t(rv, beta, t), t


def dcvar_dt(rv: SampledRV, beta: float, t: float) -> float:
    _check_beta(beta)
    return float(1.0 - np.dot(rv.weights, plus_prime(rv.values - t)) / (1.0 - beta))


def tail_multipliers(rv: SampledRV, beta: float, t: float, tail: str = TAIL_EXACT) -> np.ndarray:
    """Per-sample factor ``m_k`` with ``d CVaR = sum_k w_k m_k dX_k`` at threshold ``t``.

    Samples above ``t`` get ``1 / (1 - beta)``.  With ``tail="exact"`` the
    samples equal to ``t`` share the leftover tail mass
    ``1 - W_above / (1 - beta)``; with ``"indicator"`` they count fully.
    """
    _check_beta(beta)
    if tail == TAIL_INDICATOR:
        return plus_prime(rv.values - t) / (1.0 - beta)
    above = rv.values > t
    at = rv.values == t
    mult = np.where(above, 1.0 / (1.0 - beta), 0.0)
    if at.any():
        leftover = max(1.0 - rv.weights[above].sum() / (1.0 - beta), 0.0)
        mult[at] = leftover / rv.weights[at].sum()
    return mult


def evaluate_risk(rv: SampledRV, spec: RiskSpec):
    """Objective value, ``t`` and per-sample adjoint multipliers.

    The multiplier of sample ``k`` is the factor in front of its misfit
    derivative: 1 for the expectation, :func:`tail_multipliers` for CVaR.
    """
    if spec.kind == EXPECTATION:
        return rv.mean(), float("nan"), np.ones_like(rv.values)
    value, t = cvar(rv, spec.beta)
    return value, t, tail_multipliers(rv, spec.beta, t, spec.tail)
