import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_bar_stiffness
from weakspot.exceptions import DegenerateElement, DimensionMismatch, InvalidSensor, SingularSystem
from weakspot.fem import (BAR, STRAIN, TRI, Element, Factorization, FEModel, Material, Mesh, SensorSet,
                          assemble_global, compute_strains, element_stiffness, extract_measurements,
                          reactions, reduce_matrix, solve_forward, solve_full, thermal_load)
from weakspot.meshes import bar_chain, plate_mesh

coord = st.floats(-5, 5, allow_nan=False)


def _bar(p, q):
    mesh = Mesh(np.array([p, q], dtype=float), [Element(BAR, (0, 1), 1.0)])
    return mesh, mesh.elements[0]


def _tri(p, q, r):
    mesh = Mesh(np.array([p, q, r], dtype=float), [Element(TRI, (0, 1, 2), 0.1)])
    return mesh, mesh.elements[0]


def test_unit_bar_stiffness():
    mesh, el = _bar([0, 0], [1, 0])
    K = element_stiffness(el, Material(E=1.0), mesh)
    expected = np.zeros((4, 4))
    expected[np.ix_([0, 2], [0, 2])] = [[1, -1], [-1, 1]]
    np.testing.assert_array_equal(K, expected)


def test_inclined_bar_matches_textbook_formula():
    nodes = [[0.3, -0.2, 0.1], [1.4, 0.9, -0.7]]
    mesh = Mesh(np.array(nodes), [Element(BAR, (0, 1), 3e-4)])
    K = element_stiffness(mesh.elements[0], Material(E=2e11), mesh)
    oracle = dense_bar_stiffness(nodes, [((0, 1), 3e-4, 1.0)], 2e11)
    np.testing.assert_allclose(K, oracle, rtol=1e-13, atol=1e-13 * np.abs(oracle).max())


def _check_element(K, mesh, rank):
    assert np.linalg.norm(K - K.T) == 0
    eig = np.linalg.eigvalsh(K)
    assert eig.min() >= -1e-12 * np.linalg.norm(K)
    assert np.sum(eig > 1e-9 * eig.max()) == rank
    for c in range(mesh.dim):
        r = np.zeros(K.shape[0])
        r[c::mesh.dim] = 1.0
        assert np.linalg.norm(K @ r) <= 1e-10 * np.linalg.norm(K)


@settings(max_examples=50, deadline=None)
@given(st.lists(coord, min_size=3, max_size=3), st.lists(coord, min_size=3, max_size=3))
def test_bar_stiffness_properties(p, q):
    if np.linalg.norm(np.subtract(p, q)) < 1e-3:
        return
    mesh, el = _bar(p, q)
    _check_element(element_stiffness(el, Material(E=3.0), mesh), mesh, 1)


@settings(max_examples=50, deadline=None)
@given(st.lists(coord, min_size=6, max_size=6))
def test_triangle_stiffness_properties(xy):
    p, q, r = np.reshape(xy, (3, 2))
    (a, b), (c, d) = q - p, r - p
    area = 0.5 * abs(a * d - b * c)
    if area < 1e-2:
        return
    mesh, el = _tri(p, q, r)
    K = element_stiffness(el, Material(E=5.0, nu=0.25), mesh)
    _check_element(K, mesh, 3)
    # infinitesimal rotation is also a zero-energy mode
    rot = np.column_stack([-mesh.nodes[:, 1], mesh.nodes[:, 0]]).ravel()
    assert np.linalg.norm(K @ rot) <= 1e-10 * np.linalg.norm(K) * np.linalg.norm(rot)


def test_degenerate_elements_rejected():
    with pytest.raises(DegenerateElement):
        mesh, el = _bar([1, 1], [1, 1])
        element_stiffness(el, Material(E=1.0), mesh)
    with pytest.raises(DegenerateElement):
        mesh, el = _tri([0, 0], [1, 1], [2, 2])
        element_stiffness(el, Material(E=1.0), mesh)
    with pytest.raises(DegenerateElement):
        Element(BAR, (0, 1), 0.0)


def test_two_bar_chain_reduced_matrix_by_hand():
    mesh = bar_chain(2, 2.0, 1.0, 2, ("left",))
    K = reduce_matrix(mesh, assemble_global(mesh, Material(E=1.0), [1.0, 2.0])).toarray()
    # free dofs: x of node 1 and node 2, each bar has EA/L = 1
    np.testing.assert_array_equal(K, [[3.0, -2.0], [-2.0, 2.0]])


def test_assembly_identity_and_linearity(ten_bar):
    mesh, model = ten_bar
    ones = np.ones(mesh.n_elements)
    K1 = model.assemble(ones).toarray()
    direct = np.zeros_like(K1)
    for Ke, d in zip(model.Ke, model.dofs):
        direct[np.ix_(d, d)] += Ke
    np.testing.assert_allclose(K1, direct, rtol=0, atol=1e-12 * np.abs(direct).max())
    alpha = np.linspace(0.2, 1.0, mesh.n_elements)
    k, delta = 4, 0.37
    bumped = alpha.copy()
    bumped[k] += delta
    diff = model.assemble(bumped).toarray() - model.assemble(alpha).toarray()
    scatter = np.zeros_like(diff)
    scatter[np.ix_(model.dofs[k], model.dofs[k])] = delta * model.Ke[k]
    np.testing.assert_allclose(diff, scatter, rtol=0, atol=1e-9 * np.abs(scatter).max())


def test_reduced_matrix_symmetric_positive_definite(ten_bar):
    mesh, model = ten_bar
    rng = np.random.default_rng(1)
    for _ in range(5):
        K = model.reduced(rng.uniform(1e-3, 1.0, mesh.n_elements)).toarray()
        assert np.linalg.norm(K - K.T) == 0
        np.linalg.cholesky(K)


def test_unit_spring_tip_displacement():
    mesh = bar_chain(1, 1.0, 1.0, 2, ("left",))
    f = np.zeros(mesh.ndof)
    f[2] = 1.0
    u = solve_full(FEModel(mesh, Material(E=1.0)), [1.0], f)
    assert u[2] == pytest.approx(1.0, abs=1e-15)
    assert np.all(u[mesh.fixed_dofs] == 0)


def test_zero_load_gives_zero_displacement(ten_bar):
    mesh, model = ten_bar
    u = solve_full(model, np.ones(mesh.n_elements), np.zeros(mesh.ndof))
    assert np.all(u == 0)


def test_five_bar_matches_dense_lu(five_bar):
    mesh, mat = five_bar
    alpha = np.array([1.0, 0.5, 0.8, 0.3, 0.9])
    f = np.zeros(mesh.ndof)
    f[[4, 5, 7]] = [1e3, -2e3, -5e2]
    u = solve_full(FEModel(mesh, mat), alpha, f)
    K = dense_bar_stiffness(mesh.nodes, [(el.nodes, el.area, a) for el, a in zip(mesh.elements, alpha)], mat.E)
    free = mesh.free_dofs
    oracle = np.zeros(mesh.ndof)
    oracle[free] = np.linalg.solve(K[np.ix_(free, free)], f[free])
    assert np.linalg.norm(u - oracle) <= 1e-12 * np.linalg.norm(oracle)
    assert np.all(u[mesh.fixed_dofs] == 0)


def test_residual_and_sparse_path_agree():
    mesh = plate_mesh(24, 12)  # 325 nodes, above the dense limit
    model = FEModel(mesh, Material(E=2e9))
    alpha = np.random.default_rng(0).uniform(0.1, 1.0, mesh.n_elements)
    K = model.reduced(alpha)
    assert K.shape[0] > 500
    f = np.random.default_rng(1).standard_normal(K.shape[0])
    u = solve_forward(K, f)
    assert np.linalg.norm(K @ u - f) <= 1e-10 * np.linalg.norm(f)
    dense = np.linalg.solve(K.toarray(), f)
    assert np.linalg.norm(u - dense) <= 1e-9 * np.linalg.norm(dense)


def test_multiple_right_hand_sides(ten_bar):
    mesh, model = ten_bar
    fact = model.factorize(np.ones(mesh.n_elements))
    B = np.random.default_rng(2).standard_normal((len(mesh.free_dofs), 4))
    X = fact.solve(B)
    for k in range(4):
        np.testing.assert_allclose(X[:, k], fact.solve(B[:, k]), rtol=1e-13)


def test_mechanism_is_singular():
    mesh = bar_chain(2, 2.0, 1.0, 2, clamp=())
    with pytest.raises(SingularSystem):
        FEModel(mesh, Material(E=1.0)).factorize([1.0, 1.0])
    with pytest.raises(SingularSystem):
        Factorization(sps.csr_matrix(np.zeros((3, 3))))


def test_rigid_translation_has_zero_strain():
    mesh = plate_mesh(3, 2)
    u = np.tile([0.3, -0.7], mesh.n_nodes)
    assert np.abs(compute_strains(mesh, u)).max() <= 1e-14


def test_stretched_bar_strain():
    mesh = bar_chain(1, 1.0, 1.0, 2, ("left",))
    u = np.array([0.0, 0.0, 0.01, 0.0])
    assert compute_strains(mesh, u)[0] == pytest.approx(0.01, abs=1e-16)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=4, max_size=4))
def test_cst_patch_test(a):
    A = np.reshape(a, (2, 2))
    mesh = plate_mesh(3, 2, 3.0, 2.0)
    u = (mesh.nodes @ A.T).ravel()
    s = compute_strains(mesh, u).reshape(-1, 3)
    # engineering shear: gamma_xy = 2 * sym(A)_xy
    expected = np.array([A[0, 0], A[1, 1], A[0, 1] + A[1, 0]])
    assert np.abs(s - expected).max() <= 1e-12


def test_strains_are_linear_in_u(ten_bar):
    mesh, model = ten_bar
    rng = np.random.default_rng(3)
    u1, u2 = rng.standard_normal((2, mesh.ndof))
    lhs = compute_strains(mesh, 2.0 * u1 - 3.0 * u2, model)
    rhs = 2.0 * compute_strains(mesh, u1, model) - 3.0 * compute_strains(mesh, u2, model)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_thermal_load_zero_and_linear(ten_bar):
    mesh, model = ten_bar
    alpha = np.linspace(0.5, 1.0, mesh.n_elements)
    assert np.all(thermal_load(mesh, model.material, alpha, 0.0) == 0)
    f1 = thermal_load(mesh, model.material, alpha, 10.0)
    np.testing.assert_allclose(thermal_load(mesh, model.material, alpha, -25.0), -2.5 * f1, rtol=1e-14)
    np.testing.assert_allclose(thermal_load(mesh, model.material, 2 * alpha, 10.0), 2 * f1, rtol=1e-14)


def test_free_thermal_expansion_is_stress_free():
    mesh = bar_chain(1, 2.0, 1e-3, 2, ("left",))
    mat = Material(E=2e11, alpha_exp=11e-6)
    model = FEModel(mesh, mat)
    u = solve_full(model, [1.0], thermal_load(mesh, mat, [1.0], 40.0))
    strain = compute_strains(mesh, u, model)[0]
    assert strain == pytest.approx(11e-6 * 40.0, rel=1e-12)
    assert mat.E * (strain - mat.alpha_exp * 40.0) == pytest.approx(0.0, abs=1e-6)


def test_clamped_chain_reaction():
    mesh = bar_chain(2, 2.0, 1e-3, 2, ("left", "right"))
    mat = Material(E=2e11, alpha_exp=11e-6)
    model = FEModel(mesh, mat)
    alpha = np.ones(2)
    f = thermal_load(mesh, mat, alpha, -30.0)
    u = solve_full(model, alpha, f)
    r = reactions(model, alpha, u, f)
    expected = -mat.E * 1e-3 * mat.alpha_exp * -30.0
    assert r[2 * 2] == pytest.approx(expected, rel=1e-10)


def test_triangle_thermal_load_against_b_matrix():
    mesh, el = _tri([0, 0], [2, 0.5], [0.4, 1.5])
    mat = Material(E=3.0, nu=0.2, alpha_exp=1e-3)
    f = thermal_load(mesh, mat, [1.0], 5.0)
    # f = B^T D eps_t V with eps_t = (a dT, a dT, 0)
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    A2 = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0])
    b = np.array([y[1] - y[2], y[2] - y[0], y[0] - y[1]]) / A2
    c = np.array([x[2] - x[1], x[0] - x[2], x[1] - x[0]]) / A2
    B = np.zeros((3, 6))
    B[0, 0::2], B[1, 1::2], B[2, 0::2], B[2, 1::2] = b, c, c, b
    D = mat.E / (1 - mat.nu**2) * np.array([[1, mat.nu, 0], [mat.nu, 1, 0], [0, 0, (1 - mat.nu) / 2]])
    eps = np.array([1e-3 * 5.0, 1e-3 * 5.0, 0.0])
    np.testing.assert_allclose(f, B.T @ D @ eps * 0.5 * A2 * 0.1, rtol=1e-13)


def test_sensors_read_oracle_entries(five_bar):
    mesh, mat = five_bar
    model = FEModel(mesh, mat)
    alpha = np.ones(5)
    f = np.zeros(mesh.ndof)
    f[5], f[7] = -1e3, -2e3
    u = solve_full(model, alpha, f)
    K = dense_bar_stiffness(mesh.nodes, [(el.nodes, el.area, 1.0) for el in mesh.elements], mat.E)
    free = mesh.free_dofs
    oracle = np.zeros(mesh.ndof)
    oracle[free] = np.linalg.solve(K[np.ix_(free, free)], f[free])
    sensors = SensorSet.displacements([(2, 1), (3, 0), (3, 1)])
    got = extract_measurements(u, compute_strains(mesh, u, model), sensors, mesh)
    np.testing.assert_allclose(got, oracle[[5, 6, 7]], rtol=1e-12)


def test_sensor_edge_cases(five_bar):
    mesh, mat = five_bar
    model = FEModel(mesh, mat)
    u = np.random.default_rng(4).standard_normal(mesh.ndof)
    u[mesh.fixed_dofs] = 0
    s = compute_strains(mesh, u, model)
    assert extract_measurements(u, s, SensorSet.displacements([(0, 1)]), mesh)[0] == 0
    every = SensorSet.displacements([(n, c) for n in range(mesh.n_nodes) for c in range(2)])
    np.testing.assert_array_equal(extract_measurements(u, s, every, mesh), u)
    strain = SensorSet([STRAIN], [3], [0])
    assert extract_measurements(u, s, strain, mesh)[0] == s[3]
    np.testing.assert_allclose(strain.selection(mesh, model) @ u, [s[3]], rtol=1e-14)
    for bad in (SensorSet.displacements([(9, 0)]), SensorSet.displacements([(1, 2)]), SensorSet([STRAIN], [5], [0])):
        with pytest.raises(InvalidSensor):
            extract_measurements(u, s, bad, mesh)
        with pytest.raises(InvalidSensor):
            bad.selection(mesh, model)


def test_dimension_checks(ten_bar):
    mesh, model = ten_bar
    with pytest.raises(DimensionMismatch):
        model.assemble(np.ones(3))
    with pytest.raises(DimensionMismatch):
        compute_strains(mesh, np.zeros(5))
    with pytest.raises(ValueError):
        Mesh(np.zeros((3, 3)), [Element(TRI, (0, 1, 2), 1.0)])
