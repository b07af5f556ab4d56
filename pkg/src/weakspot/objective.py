"""Sensor misfit, adjoint solves, the strength-factor gradient and its smoothing."""
from __future__ import annotations

import weakref

import numpy as np
import scipy.sparse as sps

from .exceptions import AllZeroMeasurements, DimensionMismatch
from .fem import Factorization, FEModel, Mesh, SensorSet
from .risk import plus_prime

WEIGHT_FLOOR = 1e-12


def local_weights(measured) -> np.ndarray:
    """Inverse squared readings, with near-zero readings floored.

    The floor is ``1e-12 * max|measured|`` so a sensor reading exactly zero
    gets a large but finite weight.
    """
    measured = np.asarray(measured, dtype=float)
    scale = np.max(np.abs(measured)) if measured.size else 0.0
    if scale == 0:
        raise AllZeroMeasurements("cannot build local weights: every measurement is zero")
    floor = WEIGHT_FLOOR * scale
    return 1.0 / np.maximum(measured**2, floor**2)


def misfit(predicted, sensors: SensorSet):
    """``0.5 * sum_j w_j (measured_j - predicted_j)^2``.

    ``predicted`` may carry extra trailing axes (one column per load case);
    the result then has one entry per column.
    """
    predicted = np.asarray(predicted, dtype=float)
    if predicted.shape[0] != len(sensors):
        raise DimensionMismatch(f"{predicted.shape[0]} predictions for {len(sensors)} sensors")
    gap = _gap(predicted, sensors)
    w = sensors.weights.reshape((-1,) + (1,) * (predicted.ndim - 1))
    return 0.5 * np.sum(w * gap**2, axis=0)


def _gap(predicted, sensors):
    m = sensors.measured.reshape((-1,) + (1,) * (predicted.ndim - 1))
    return m - predicted


def misfit_gradient_u(predicted, sensors: SensorSet, mesh: Mesh, model: FEModel | None = None) -> np.ndarray:
    """Derivative of the misfit with respect to the full displacement vector."""
    predicted = np.asarray(predicted, dtype=float)
    if predicted.shape[0] != len(sensors):
        raise DimensionMismatch(f"{predicted.shape[0]} predictions for {len(sensors)} sensors")
    w = sensors.weights.reshape((-1,) + (1,) * (predicted.ndim - 1))
    P = sensors.selection(mesh, model)
    return -(P.T @ (w * _gap(predicted, sensors)))


def adjoint_solve(factorization: Factorization, I_k: float, t: float, beta: float, rhs_raw) -> np.ndarray:
    """Adjoint state of one quadrature node for the CVaR objective.

    ``rhs_raw`` is the reduced misfit derivative.  Samples below ``t`` are
    outside the tail and return zero without a solve.
    """
    rhs_raw = np.asarray(rhs_raw, dtype=float)
    if plus_prime(I_k - t) == 0:
        return np.zeros_like(rhs_raw)
    return factorization.solve(-rhs_raw / (1.0 - beta))


def adjoint_solve_batch(factorization: Factorization, rhs_raw, multipliers) -> np.ndarray:
    """Solve ``K u~_k = -m_k * rhs_k`` for all columns with ``m_k > 0``; others are zero."""
    rhs_raw = np.asarray(rhs_raw, dtype=float)
    multipliers = np.asarray(multipliers, dtype=float)
    out = np.zeros_like(rhs_raw)
    active = np.flatnonzero(multipliers > 0)
    if active.size:
        out[:, active] = factorization.solve(-rhs_raw[:, active] * multipliers[active])
    return out


def gradient_alpha(model: FEModel, U, U_adj, weights, delta_T=None) -> np.ndarray:
    """``g_e = sum_k w_k u~_k^T (K_e u_k - dT_k f_e)`` on full displacement columns.

    ``f_e`` is the unit thermal load of element ``e``; it enters only when
    ``delta_T`` (one value per column) is given, since the thermal load
    itself scales with ``alpha_e``.
    """
    U = np.asarray(U, dtype=float)
    U_adj = np.asarray(U_adj, dtype=float)
    if U.ndim == 1:
        U, U_adj = U[:, None], U_adj[:, None]
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    if U.shape != U_adj.shape or U.shape[0] != model.mesh.ndof or weights.shape != (U.shape[1],):
        raise DimensionMismatch("state, adjoint and weight shapes disagree")
    g = np.zeros(model.mesh.n_elements)
    for idx, dofs, Ke, fth in model.groups.values():
        Ue = U[dofs]            # (n_e, m, N)
        Ve = U_adj[dofs]
        KU = np.einsum("eab,ebk->eak", Ke, Ue)
        per_node = np.einsum("eak,eak->ek", Ve, KU)
        if delta_T is not None:
            per_node = per_node - np.einsum("ea,eak->ek", fth, Ve) * np.asarray(delta_T, dtype=float)[None, :]
        g[idx] = per_node @ weights
    return g


_SMOOTHERS = weakref.WeakKeyDictionary()


def smoothing_operator(mesh: Mesh) -> sps.csr_matrix:
    """One element -> point -> element averaging pass as a sparse matrix.

    Element to point is volume weighted over the elements sharing the point;
    point to element is the plain mean over the element's nodes.
    """
    op = _SMOOTHERS.get(mesh)
    if op is not None:
        return op
    rows, cols = [], []
    for e, el in enumerate(mesh.elements):
        rows.extend([e] * len(el.nodes))
        cols.extend(el.nodes)
    rows = np.asarray(rows, dtype=int)
    cols = np.asarray(cols, dtype=int)
    incidence = sps.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(mesh.n_elements, mesh.n_nodes))
    n_per_el = np.asarray(incidence.sum(axis=1)).ravel()
    to_elem = sps.diags(1.0 / n_per_el) @ incidence
    vol_at_node = incidence.T @ mesh.volumes
    vol_at_node[vol_at_node == 0] = 1.0
    to_point = sps.diags(1.0 / vol_at_node) @ incidence.T @ sps.diags(mesh.volumes)
    op = (to_elem @ to_point).tocsr()
    _SMOOTHERS[mesh] = op
    return op


def smooth(g, mesh: Mesh, steps: int) -> np.ndarray:
    if steps < 0:
        raise ValueError("smoothing steps must be non-negative")
    g = np.asarray(g, dtype=float).copy()
    if steps == 0:
        return g
    op = smoothing_operator(mesh)
    for _ in range(steps):
        g = op @ g
    return g
