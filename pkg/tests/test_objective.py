import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weakspot.exceptions import AllZeroMeasurements, DimensionMismatch, InvalidArgument
from weakspot.fem import STRAIN, TRI, Element, FEModel, Material, Mesh, SensorSet, solve_full
from weakspot.meshes import bar_chain, nodal_load, plate_mesh, ten_bar_truss
from weakspot.objective import (adjoint_solve, adjoint_solve_batch, gradient_alpha, local_weights, misfit,
                                misfit_gradient_u, smooth, smoothing_operator)
from weakspot.problem import LoadModel, Problem, finite_difference_check
from weakspot.risk import CVAR, EXPECTATION, RiskSpec
from weakspot.stochastic import LoadGroups, ParamBox, tensor_grid


def test_local_weights():
    np.testing.assert_array_equal(local_weights([2.0]), [0.25])
    np.testing.assert_array_equal(local_weights([1.0, 1.0, 1.0]), [1.0, 1.0, 1.0])
    w = local_weights([0.0, 3.0, -1.0])
    assert w[0] == 1.0 / (1e-12 * 3.0) ** 2 and np.isfinite(w[0])
    with pytest.raises(AllZeroMeasurements):
        local_weights([0.0, 0.0])


def test_misfit_examples():
    s = SensorSet.displacements([(1, 0)], measured=[3.0], weights=[1.0])
    assert misfit([3.0], s) == 0
    assert misfit([1.0], s) == 2.0
    m = np.array([0.5, -2.0, 1.5])
    s3 = SensorSet.displacements([(0, 0), (1, 0), (2, 1)], measured=m, weights=local_weights(m))
    p = np.array([0.4, -2.5, 1.0])
    total = 0.0
    for mj, pj in zip(m, p):
        total += 0.5 * (1 / mj**2) * (mj - pj) ** 2
    assert misfit(p, s3) == pytest.approx(total, rel=1e-14)
    with pytest.raises(DimensionMismatch):
        misfit([1.0, 2.0], s3)


@settings(max_examples=30, deadline=None)
@given(st.permutations(range(5)))
def test_misfit_permutation_invariant(perm):
    rng = np.random.default_rng(0)
    m, p, w = rng.standard_normal(5), rng.standard_normal(5), rng.uniform(0.1, 2, 5)
    s = SensorSet.displacements([(j, 0) for j in range(5)], m, w)
    perm = list(perm)
    sp = SensorSet.displacements([(j, 0) for j in perm], m[perm], w[perm])
    assert misfit(p[perm], sp) == pytest.approx(misfit(p, s), rel=1e-13)


def test_misfit_gradient_simple(ten_bar):
    mesh, model = ten_bar
    s = SensorSet.displacements([(0, 1)], measured=[0.2], weights=[3.0])
    assert np.all(misfit_gradient_u([0.2], s, mesh) == 0)
    g = misfit_gradient_u([0.5], s, mesh)
    assert np.flatnonzero(g).tolist() == [1]
    assert g[1] == pytest.approx(-3.0 * (0.2 - 0.5))


def test_misfit_gradient_finite_differences(ten_bar):
    mesh, model = ten_bar
    rng = np.random.default_rng(5)
    sensors = SensorSet([*["displacement"] * 3, STRAIN, STRAIN], [0, 1, 3, 2, 7], [0, 1, 1, 0, 0])
    sensors = sensors.with_values(rng.standard_normal(5), rng.uniform(0.5, 2, 5))
    P = sensors.selection(mesh, model)
    u = rng.standard_normal(mesh.ndof)
    g = misfit_gradient_u(P @ u, sensors, mesh, model)
    h = 1e-6
    fd = np.array([(misfit(P @ (u + h * e), sensors) - misfit(P @ (u - h * e), sensors)) / (2 * h)
                   for e in np.eye(mesh.ndof)])
    assert np.max(np.abs(g - fd)) <= 1e-7 * np.max(np.abs(fd))


def test_adjoint_solve(ten_bar):
    mesh, model = ten_bar
    fact = model.factorize(np.ones(mesh.n_elements))
    rhs = np.random.default_rng(6).standard_normal(len(mesh.free_dofs))
    assert np.all(adjoint_solve(fact, 1.0, 2.0, 0.5, rhs) == 0)
    K = model.reduced(np.ones(mesh.n_elements)).toarray()
    expected = np.linalg.solve(K.T, -2.0 * rhs)
    got = adjoint_solve(fact, 2.0, 2.0, 0.5, rhs)
    assert np.linalg.norm(got - expected) <= 1e-12 * np.linalg.norm(expected)
    forward = fact.solve(-2.0 * rhs)
    np.testing.assert_allclose(got, forward, rtol=0, atol=1e-12 * np.abs(forward).max())
    batch = adjoint_solve_batch(fact, np.column_stack([rhs, rhs]), [0.0, 2.0])
    assert np.all(batch[:, 0] == 0)
    np.testing.assert_allclose(batch[:, 1], got, rtol=1e-14)


def test_gradient_zero_adjoint(ten_bar):
    mesh, model = ten_bar
    U = np.random.default_rng(0).standard_normal((mesh.ndof, 3))
    assert np.all(gradient_alpha(model, U, np.zeros_like(U), np.ones(3) / 3) == 0)


def test_gradient_one_dof_spring():
    mesh = bar_chain(1, 1.0, 1.0, 2, ("left",))
    model = FEModel(mesh, Material(E=4.0))
    a, f, m, w = 0.7, 2.0, 0.5, 3.0
    u_tip = f / (a * 4.0)
    u = np.array([0, 0, u_tip, 0])
    u_adj = np.array([0, 0, w * (m - u_tip) / (a * 4.0), 0])
    g = gradient_alpha(model, u, u_adj, [1.0])
    # dI/da for I = w/2 (m - f/(a k))^2
    assert g[0] == pytest.approx(w * (m - u_tip) * u_tip / a, rel=1e-14)


def _problem(mesh, model, risk, n_g=3, groups=2, seed=0, thermal=False, sensors=None):
    rng = np.random.default_rng(seed)
    loaded = [n for n in range(mesh.n_nodes) if all((n, c) not in set(mesh.dirichlet) for c in range(mesh.dim))]
    f = nodal_load(mesh, [(n, 1, -1e4 * rng.uniform(0.5, 1.5)) for n in loaded])
    coords = np.repeat(mesh.nodes, mesh.dim, axis=0)
    lg = LoadGroups.uniform_slabs(f, coords, 0, groups)
    box = [(0.8, 1.2)] * groups + ([(-40.0, 10.0)] if thermal else [])
    loads = LoadModel(f, lg, thermal_random=thermal)
    if sensors is None:
        sensors = SensorSet.displacements([(n, c) for n in loaded for c in range(mesh.dim)])
    true = np.ones(mesh.n_elements)
    true[[1, 6]] = 0.5
    U = solve_full(model, true, loads.forces(model, true, np.full(loads.n_params, 1.05)))
    meas = sensors.selection(mesh, model) @ U
    sensors = sensors.with_values(meas * (1 + 0.05 * rng.standard_normal(meas.size)), local_weights(meas))
    return Problem(model, sensors, loads, tensor_grid(ParamBox(box), n_g), risk, smoothing_steps=2)


def test_full_gradient_finite_differences(ten_bar):
    mesh, model = ten_bar
    p = _problem(mesh, model, RiskSpec(EXPECTATION))
    alpha = np.random.default_rng(1).uniform(0.5, 1.0, mesh.n_elements)
    _, _, rel = finite_difference_check(p, alpha)
    assert np.max(rel) <= 1e-5


def test_cvar_gradient_at_frozen_t(ten_bar):
    mesh, model = ten_bar
    p = _problem(mesh, model, RiskSpec(CVAR, 0.6))
    alpha = np.random.default_rng(2).uniform(0.5, 1.0, mesh.n_elements)
    _, _, rel = finite_difference_check(p, alpha)
    checked = np.isfinite(rel)
    assert checked.sum() >= 8
    assert np.max(rel[checked]) <= 1e-5


def test_thermal_and_strain_sensor_gradient(ten_bar):
    mesh, model = ten_bar
    sensors = SensorSet(["displacement", "displacement", STRAIN, STRAIN, STRAIN], [0, 1, 0, 4, 9], [1, 0, 0, 0, 0])
    p = _problem(mesh, model, RiskSpec(EXPECTATION), n_g=2, thermal=True, sensors=sensors)
    alpha = np.random.default_rng(3).uniform(0.5, 1.0, mesh.n_elements)
    _, _, rel = finite_difference_check(p, alpha)
    assert np.max(rel) <= 1e-5


def test_finite_difference_step_must_be_positive(ten_bar):
    mesh, model = ten_bar
    p = _problem(mesh, model, RiskSpec(EXPECTATION), n_g=1)
    with pytest.raises(InvalidArgument):
        finite_difference_check(p, np.ones(mesh.n_elements), 0.0)


def test_evaluate_counts_and_risk_dominance():
    mesh = plate_mesh(4, 2)
    model = FEModel(mesh, Material(E=2e9))
    f = nodal_load(mesh, [(n, 1, -1e3) for n in range(5)])
    coords = np.repeat(mesh.nodes, 2, axis=0)
    loads = LoadModel(f, LoadGroups.uniform_slabs(f, coords, 0, 4))
    grid = tensor_grid(ParamBox([(0.8, 1.2)] * 4), 3)
    sensors = SensorSet.displacements([(n, 1) for n in range(5)], np.full(5, -1e-3), np.ones(5))
    p = Problem(model, sensors, loads, grid, RiskSpec(EXPECTATION))
    ev = p.evaluate(np.ones(mesh.n_elements))
    assert p.forward_solves == 81 and p.factorizations == 1
    q = p.with_risk(RiskSpec(CVAR, 0.5))
    assert q.evaluate(np.ones(mesh.n_elements)).objective >= ev.objective


def test_smoothing_basics():
    mesh = plate_mesh(4, 3)
    g = np.random.default_rng(0).standard_normal(mesh.n_elements)
    np.testing.assert_array_equal(smooth(g, mesh, 0), g)
    np.testing.assert_allclose(smooth(np.full(mesh.n_elements, 2.5), mesh, 7), 2.5, rtol=1e-14)
    row_sums = np.asarray(smoothing_operator(mesh).sum(axis=1)).ravel()
    np.testing.assert_allclose(row_sums, 1.0, rtol=1e-14)
    with pytest.raises(ValueError):
        smooth(g, mesh, -1)


def test_smoothing_two_triangles_by_hand():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0, 2.0]])
    mesh = Mesh(nodes, [Element(TRI, (0, 1, 2), 0.1), Element(TRI, (1, 3, 2), 0.1)])
    gA, gB = 1.0, 5.0
    VA, VB = 0.5 * 0.1, 1.5 * 0.1
    shared = (VA * gA + VB * gB) / (VA + VB)
    expected = [(gA + 2 * shared) / 3, (gB + 2 * shared) / 3]
    np.testing.assert_allclose(smooth([gA, gB], mesh, 1), expected, rtol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 6), st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 1000))
def test_smoothing_linear_and_range(steps, a, b, seed):
    mesh = ten_bar_truss()
    rng = np.random.default_rng(seed)
    g1, g2 = rng.standard_normal((2, mesh.n_elements))
    lhs = smooth(a * g1 + b * g2, mesh, steps)
    rhs = a * smooth(g1, mesh, steps) + b * smooth(g2, mesh, steps)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + abs(a) + abs(b)) * 10)
    s = smooth(g1, mesh, steps)
    assert s.min() >= g1.min() - 1e-12 and s.max() <= g1.max() + 1e-12
