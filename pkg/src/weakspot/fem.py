"""Linear-elastic finite elements: 2-node bars and plane-stress triangles.

The stiffness matrix is assembled as a strength-weighted sum of element
matrices, ``K(alpha) = sum_e alpha_e K_e``.  Homogeneous Dirichlet
conditions are applied by eliminating the constrained dofs, so every solve
works on the reduced SPD system and scatters back into the full vector.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .exceptions import DegenerateElement, DimensionMismatch, InvalidSensor, SingularSystem

BAR = "bar"
TRI = "tri"

GEOM_TOL = 1e-12
DEFAULT_EPS_ALPHA = 1e-3
DENSE_LIMIT = 500  # reduced dofs; above this a sparse factorization is used
PIVOT_TOL = 1e-13


@dataclass(frozen=True)
class Element:
    """A bar (``area`` = cross-section) or a CST triangle (``area`` = thickness)."""

    kind: str
    nodes: tuple
    area: float

    def __post_init__(self):
        if self.kind not in (BAR, TRI):
            raise ValueError(f"unknown element kind {self.kind!r}")
        expected = 2 if self.kind == BAR else 3
        if len(self.nodes) != expected:
            raise ValueError(f"{self.kind} element needs {expected} nodes, got {len(self.nodes)}")
        if not (self.area > 0 and np.isfinite(self.area)):
            raise DegenerateElement(f"area/thickness must be positive, got {self.area}")
        object.__setattr__(self, "nodes", tuple(int(n) for n in self.nodes))


@dataclass(frozen=True)
class Material:
    E: float
    nu: float = 0.3
    rho: float = 7800.0
    alpha_exp: float = 11e-6

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError("Young's modulus must be positive")
        if not 0 <= self.nu < 0.5:
            raise ValueError("Poisson ratio must lie in [0, 0.5)")

    def plane_stress(self) -> np.ndarray:
        nu = self.nu
        return self.E / (1 - nu**2) * np.array([[1.0, nu, 0.0],
                                                [nu, 1.0, 0.0],
                                                [0.0, 0.0, (1 - nu) / 2]])


class Mesh:
    """Nodes, elements and clamped dofs.

    ``dirichlet`` holds ``(node, component)`` pairs fixed to zero.  Dofs are
    numbered node-major: dof ``node * dim + component``.
    """

    def __init__(self, nodes, elements, dirichlet=()):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] not in (2, 3):
            raise ValueError("nodes must be an (N, 2) or (N, 3) array")
        self.nodes = nodes
        self.nodes.setflags(write=False)
        self.dim = nodes.shape[1]
        self.elements = tuple(elements)
        self.dirichlet = tuple(sorted({(int(n), int(c)) for n, c in dirichlet}))
        n_nodes = len(nodes)
        for e, el in enumerate(self.elements):
            if any(n < 0 or n >= n_nodes for n in el.nodes):
                raise ValueError(f"element {e} references a missing node")
            if el.kind == TRI and self.dim != 2:
                raise ValueError("triangles are plane-stress elements and need a 2-D mesh")
        for n, c in self.dirichlet:
            if not (0 <= n < n_nodes and 0 <= c < self.dim):
                raise ValueError(f"invalid Dirichlet entry ({n}, {c})")
        # forces the geometry checks up front
        self.volumes

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def ndof(self) -> int:
        return self.n_nodes * self.dim

    @cached_property
    def fixed_dofs(self) -> np.ndarray:
        return np.array([n * self.dim + c for n, c in self.dirichlet], dtype=int)

    @cached_property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.ndof, dtype=bool)
        mask[self.fixed_dofs] = False
        return np.flatnonzero(mask)

    def element_dofs(self, e: int) -> np.ndarray:
        el = self.elements[e]
        return (np.asarray(el.nodes)[:, None] * self.dim + np.arange(self.dim)).ravel()

    @cached_property
    def volumes(self) -> np.ndarray:
        """Element volume ``V_e``: length x area for bars, area x thickness for triangles."""
        return np.array([_geometry(self, el)[0] * el.area for el in self.elements])

    @cached_property
    def centroids(self) -> np.ndarray:
        return np.array([self.nodes[list(el.nodes)].mean(axis=0) for el in self.elements])

    @cached_property
    def strain_offsets(self) -> np.ndarray:
        """Start index of each element's block in the flat strain vector."""
        sizes = [1 if el.kind == BAR else 3 for el in self.elements]
        return np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    @property
    def n_strains(self) -> int:
        return int(self.strain_offsets[-1])

    def reduce(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v)[self.free_dofs]

    def expand(self, v_free: np.ndarray) -> np.ndarray:
        v_free = np.asarray(v_free)
        out = np.zeros((self.ndof,) + v_free.shape[1:])
        out[self.free_dofs] = v_free
        return out


def _geometry(mesh: Mesh, el: Element):
    """Return (measure, B) where measure is length or area and B maps u_e to strain."""
    xy = mesh.nodes[list(el.nodes)]
    if el.kind == BAR:
        d = xy[1] - xy[0]
        length = float(np.linalg.norm(d))
        if length < GEOM_TOL:
            raise DegenerateElement(f"bar {el.nodes} has zero length")
        n = d / length
        return length, np.concatenate([-n, n])[None, :] / length
    (x1, y1), (x2, y2), (x3, y3) = xy
    det = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
    if abs(det) / 2 < GEOM_TOL:
        raise DegenerateElement(f"triangle {el.nodes} has zero area")
    b = np.array([y2 - y3, y3 - y1, y1 - y2])
    c = np.array([x3 - x2, x1 - x3, x2 - x1])
    B = np.zeros((3, 6))
    B[0, 0::2] = b
    B[1, 1::2] = c
    B[2, 0::2] = c
    B[2, 1::2] = b
    return abs(det) / 2, B / det


def strain_displacement(element: Element, mesh: Mesh) -> np.ndarray:
    return _geometry(mesh, element)[1]


def _constitutive(element: Element, material: Material) -> np.ndarray:
    if element.kind == BAR:
        return np.array([[material.E]])
    return material.plane_stress()


def element_stiffness(element: Element, material: Material, mesh: Mesh) -> np.ndarray:
    """Unweighted element stiffness ``B^T D B V_e`` in global coordinates."""
    measure, B = _geometry(mesh, element)
    K = B.T @ _constitutive(element, material) @ B * (measure * element.area)
    return 0.5 * (K + K.T)


def element_thermal_load(element: Element, material: Material, mesh: Mesh) -> np.ndarray:
    """Equivalent nodal force of a unit (1 K) uniform temperature change."""
    measure, B = _geometry(mesh, element)
    if element.kind == BAR:
        eps_t = np.array([material.alpha_exp])
    else:
        eps_t = material.alpha_exp * np.array([1.0, 1.0, 0.0])
    return B.T @ _constitutive(element, material) @ eps_t * (measure * element.area)


class Factorization:
    """Cholesky factorization of a reduced stiffness matrix.

    Dense below ``DENSE_LIMIT`` dofs, sparse LU above.  ``solve`` accepts a
    vector or a matrix of right-hand sides (one column per load case).
    """

    def __init__(self, K):
        n = K.shape[0]
        self.shape = K.shape
        if n <= DENSE_LIMIT:
            Kd = K.toarray() if sps.issparse(K) else np.asarray(K, dtype=float)
            try:
                self._cho = sla.cho_factor(Kd, lower=True, check_finite=True)
            except (np.linalg.LinAlgError, ValueError) as exc:
                raise SingularSystem(f"stiffness matrix is not positive definite: {exc}") from None
            pivots = np.diag(self._cho[0]) ** 2
            scale = np.max(np.diag(Kd)) if n else 1.0
            self._lu = None
        else:
            Ks = sps.csc_matrix(K)
            try:
                self._lu = spla.splu(Ks)
            except RuntimeError as exc:
                raise SingularSystem(str(exc)) from None
            pivots = np.abs(self._lu.U.diagonal())
            scale = np.max(np.abs(Ks.diagonal()))
            self._cho = None
        if n and np.min(pivots) <= PIVOT_TOL * scale:
            raise SingularSystem("stiffness matrix is numerically singular (mechanism or missing supports)")

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.shape[0]:
            raise DimensionMismatch(f"rhs has {b.shape[0]} rows, system has {self.shape[0]}")
        if self._cho is not None:
            return sla.cho_solve(self._cho, b, check_finite=False)
        return self._lu.solve(b)


class FEModel:
    """Caches element matrices for one mesh and material.

    Everything cached here is independent of the strength field, so a model
    is built once per problem and shared by all evaluations.
    """

    def __init__(self, mesh: Mesh, material: Material):
        self.mesh = mesh
        self.material = material
        self.Ke = [element_stiffness(el, material, mesh) for el in mesh.elements]
        self.dofs = [mesh.element_dofs(e) for e in range(mesh.n_elements)]
        self.thermal_unit = [element_thermal_load(el, material, mesh) for el in mesh.elements]
        rows, cols = [], []
        for d in self.dofs:
            rows.append(np.repeat(d, len(d)))
            cols.append(np.tile(d, len(d)))
        self._rows = np.concatenate(rows) if rows else np.zeros(0, int)
        self._cols = np.concatenate(cols) if cols else np.zeros(0, int)
        # stacks of equal-size element blocks for vectorized gradient sums
        self.groups = {}
        for size in sorted({len(d) for d in self.dofs}):
            idx = np.array([e for e, d in enumerate(self.dofs) if len(d) == size])
            self.groups[size] = (
                idx,
                np.stack([self.dofs[e] for e in idx]),
                np.stack([self.Ke[e] for e in idx]),
                np.stack([self.thermal_unit[e] for e in idx]),
            )

    def assemble(self, alpha) -> sps.csr_matrix:
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != (self.mesh.n_elements,):
            raise DimensionMismatch(f"alpha has shape {alpha.shape}, mesh has {self.mesh.n_elements} elements")
        data = np.concatenate([a * K.ravel() for a, K in zip(alpha, self.Ke)]) if self.Ke else np.zeros(0)
        n = self.mesh.ndof
        return sps.coo_matrix((data, (self._rows, self._cols)), shape=(n, n)).tocsr()

    def reduced(self, alpha) -> sps.csr_matrix:
        free = self.mesh.free_dofs
        return self.assemble(alpha)[free][:, free]

    def factorize(self, alpha) -> Factorization:
        return Factorization(self.reduced(alpha))

    def thermal(self, alpha, delta_T: float) -> np.ndarray:
        f = np.zeros(self.mesh.ndof)
        if delta_T == 0:
            return f
        for a, d, fe in zip(np.asarray(alpha, dtype=float), self.dofs, self.thermal_unit):
            f[d] += a * delta_T * fe
        return f

    @cached_property
    def strain_operator(self) -> sps.csr_matrix:
        """Sparse ``S`` with ``s = S u`` (flat strains, see ``Mesh.strain_offsets``)."""
        mesh = self.mesh
        rows, cols, vals = [], [], []
        for e, el in enumerate(mesh.elements):
            B = strain_displacement(el, mesh)
            r0 = mesh.strain_offsets[e]
            for i in range(B.shape[0]):
                rows.extend([r0 + i] * B.shape[1])
                cols.extend(self.dofs[e])
                vals.extend(B[i])
        return sps.csr_matrix((vals, (rows, cols)), shape=(mesh.n_strains, mesh.ndof))


def assemble_global(mesh: Mesh, material: Material, alpha) -> sps.csr_matrix:
    """Full (unreduced) ``K = sum_e alpha_e K_e``."""
    return FEModel(mesh, material).assemble(alpha)


def reduce_matrix(mesh: Mesh, K) -> sps.csr_matrix:
    free = mesh.free_dofs
    return sps.csr_matrix(K)[free][:, free]


def solve_forward(K, f: np.ndarray) -> np.ndarray:
    """Solve the reduced system; ``K`` may be a matrix or a :class:`Factorization`."""
    fact = K if isinstance(K, Factorization) else Factorization(K)
    return fact.solve(f)


def solve_full(model: FEModel, alpha, f_full: np.ndarray) -> np.ndarray:
    """Solve with a full-length load and return the full displacement (zeros on clamped dofs)."""
    fact = model.factorize(alpha)
    return model.mesh.expand(fact.solve(model.mesh.reduce(f_full)))


def compute_strains(mesh: Mesh, u: np.ndarray, model: FEModel | None = None) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[0] != mesh.ndof:
        raise DimensionMismatch(f"u has {u.shape[0]} entries, mesh has {mesh.ndof} dofs")
    model = model or FEModel(mesh, Material(E=1.0))
    return model.strain_operator @ u


def thermal_load(mesh: Mesh, material: Material, alpha, delta_T: float) -> np.ndarray:
    """Equivalent nodal forces of a uniform temperature change ``delta_T``."""
    return FEModel(mesh, material).thermal(alpha, float(delta_T))


def reactions(model: FEModel, alpha, u: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Support reactions ``K u - f`` on the full dof vector (nonzero only on clamped dofs)."""
    r = model.assemble(alpha) @ u - f
    out = np.zeros_like(r)
    out[model.mesh.fixed_dofs] = r[model.mesh.fixed_dofs]
    return out


DISPLACEMENT = "displacement"
STRAIN = "strain"


@dataclass
class SensorSet:
    """Point sensors.

    For a displacement sensor ``index`` is a node and ``component`` the
    coordinate direction.  For a strain sensor ``index`` is an element and
    ``component`` picks the strain entry (0 for bars; xx, yy, xy for
    triangles).
    """

    kinds: list
    index: np.ndarray
    component: np.ndarray
    measured: np.ndarray = None
    weights: np.ndarray = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.kinds = [str(k) for k in self.kinds]
        self.index = np.asarray(self.index, dtype=int)
        self.component = np.asarray(self.component, dtype=int)
        m = len(self.kinds)
        if self.index.shape != (m,) or self.component.shape != (m,):
            raise DimensionMismatch("sensor fields have inconsistent lengths")
        for k in self.kinds:
            if k not in (DISPLACEMENT, STRAIN):
                raise InvalidSensor(f"unknown sensor kind {k!r}")
        self.measured = np.zeros(m) if self.measured is None else np.asarray(self.measured, dtype=float)
        self.weights = np.ones(m) if self.weights is None else np.asarray(self.weights, dtype=float)
        if self.measured.shape != (m,) or self.weights.shape != (m,):
            raise DimensionMismatch("measured/weights length must match sensor count")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights <= 0):
            raise InvalidSensor("sensor weights must be positive and finite")

    def __len__(self):
        return len(self.kinds)

    @classmethod
    def displacements(cls, pairs, measured=None, weights=None) -> "SensorSet":
        pairs = list(pairs)
        return cls([DISPLACEMENT] * len(pairs), [p[0] for p in pairs], [p[1] for p in pairs],
                   measured, weights)

    def with_values(self, measured=None, weights=None) -> "SensorSet":
        return SensorSet(list(self.kinds), self.index.copy(), self.component.copy(),
                         self.measured if measured is None else measured,
                         self.weights if weights is None else weights)

    def selection(self, mesh: Mesh, model: FEModel | None = None) -> sps.csr_matrix:
        """Sparse operator ``P`` with predicted readings ``P u``.

        Displacement rows pick a dof; strain rows are rows of the strain
        operator.
        """
        if self._cache.get("mesh") is mesh:
            return self._cache["P"]
        S = None
        rows = []
        for j, (kind, i, c) in enumerate(zip(self.kinds, self.index, self.component)):
            if kind == DISPLACEMENT:
                if not (0 <= i < mesh.n_nodes and 0 <= c < mesh.dim):
                    raise InvalidSensor(f"sensor {j}: node {i} component {c} out of range")
                row = sps.csr_matrix(([1.0], ([0], [i * mesh.dim + c])), shape=(1, mesh.ndof))
            else:
                if not 0 <= i < mesh.n_elements:
                    raise InvalidSensor(f"sensor {j}: element {i} out of range")
                width = mesh.strain_offsets[i + 1] - mesh.strain_offsets[i]
                if not 0 <= c < width:
                    raise InvalidSensor(f"sensor {j}: strain component {c} out of range")
                if S is None:
                    S = (model or FEModel(mesh, Material(E=1.0))).strain_operator
                row = S[mesh.strain_offsets[i] + c]
            rows.append(row)
        P = sps.vstack(rows).tocsr() if rows else sps.csr_matrix((0, mesh.ndof))
        self._cache.update(mesh=mesh, P=P)
        return P


def extract_measurements(u: np.ndarray, s: np.ndarray, sensors: SensorSet, mesh: Mesh) -> np.ndarray:
    """Predicted readings: displacement components of ``u``, strain entries of ``s``."""
    u = np.asarray(u, dtype=float)
    s = np.asarray(s, dtype=float)
    out = np.empty((len(sensors),) + u.shape[1:])
    for j, (kind, i, c) in enumerate(zip(sensors.kinds, sensors.index, sensors.component)):
        if kind == DISPLACEMENT:
            if not (0 <= i < mesh.n_nodes and 0 <= c < mesh.dim):
                raise InvalidSensor(f"sensor {j}: node {i} component {c} out of range")
            out[j] = u[i * mesh.dim + c]
        else:
            if not 0 <= i < mesh.n_elements:
                raise InvalidSensor(f"sensor {j}: element {i} out of range")
            width = mesh.strain_offsets[i + 1] - mesh.strain_offsets[i]
            if not 0 <= c < width:
                raise InvalidSensor(f"sensor {j}: strain component {c} out of range")
            out[j] = s[mesh.strain_offsets[i] + c]
    return out
