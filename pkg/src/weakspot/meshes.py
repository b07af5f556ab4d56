"""Mesh generators and nodal load builders for the stock test structures."""
from __future__ import annotations

import numpy as np

from .fem import BAR, TRI, Element, Mesh


def plate_mesh(nx=20, ny=10, length=60.0, height=30.0, thickness=0.1, clamp="top") -> Mesh:
    """Rectangle ``[0, length] x [0, height]`` split into ``2 nx ny`` CST triangles.

    ``clamp`` names the edge whose nodes are fixed in both directions
    (``top``, ``bottom``, ``left``, ``right`` or ``none``).
    """
    xs = np.linspace(0.0, length, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    elements = []
    for j in range(ny):
        for i in range(nx):
            n0, n1, n2, n3 = nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)
            elements.append(Element(TRI, (n0, n1, n2), thickness))
            elements.append(Element(TRI, (n0, n2, n3), thickness))
    edge = {
        "top": np.isclose(nodes[:, 1], height),
        "bottom": np.isclose(nodes[:, 1], 0.0),
        "left": np.isclose(nodes[:, 0], 0.0),
        "right": np.isclose(nodes[:, 0], length),
        "none": np.zeros(len(nodes), dtype=bool),
    }[clamp]
    dirichlet = [(int(n), c) for n in np.flatnonzero(edge) for c in (0, 1)]
    return Mesh(nodes, elements, dirichlet)


def bar_chain(n_bars=2, length=1.0, area=1.0, dim=2, clamp=("left",)) -> Mesh:
    """Collinear bars along x.  Transverse dofs are fixed everywhere."""
    xs = np.linspace(0.0, length, n_bars + 1)
    nodes = np.zeros((n_bars + 1, dim))
    nodes[:, 0] = xs
    elements = [Element(BAR, (i, i + 1), area) for i in range(n_bars)]
    dirichlet = [(n, c) for n in range(n_bars + 1) for c in range(1, dim)]
    if "left" in clamp:
        dirichlet.append((0, 0))
    if "right" in clamp:
        dirichlet.append((n_bars, 0))
    return Mesh(nodes, elements, dirichlet)


def ten_bar_truss(bay=1.0, height=1.0, area=1.0) -> Mesh:
    """Classic two-bay cross-braced cantilever with 6 nodes and 10 bars.

    Nodes 4 and 5 (at x = 0) are pinned.
    """
    nodes = np.array([
        [2 * bay, height], [2 * bay, 0.0],
        [bay, height], [bay, 0.0],
        [0.0, height], [0.0, 0.0],
    ])
    connectivity = [(4, 2), (2, 0), (5, 3), (3, 1), (2, 3), (0, 1), (4, 3), (5, 2), (2, 1), (3, 0)]
    elements = [Element(BAR, c, area) for c in connectivity]
    dirichlet = [(4, 0), (4, 1), (5, 0), (5, 1)]
    return Mesh(nodes, elements, dirichlet)


def cantilever_truss(bays=10, bay_length=1.0, height=1.0, area=5e-4, dim=3) -> Mesh:
    """Braced cantilever clamped at x = 0.

    In 2-D each bay is a cross-braced panel.  In 3-D each bay is a square
    tube segment: four chords, one diagonal per side face and a braced
    square frame at its far end.
    """
    elements = []
    if dim == 2:
        nodes = [[i * bay_length, y] for i in range(bays + 1) for y in (0.0, height)]
        for i in range(bays):
            b0, t0, b1, t1 = 2 * i, 2 * i + 1, 2 * i + 2, 2 * i + 3
            for c in ((b0, b1), (t0, t1), (b1, t1), (b0, t1), (t0, b1)):
                elements.append(Element(BAR, c, area))
        dirichlet = [(n, c) for n in (0, 1) for c in range(2)]
        return Mesh(np.array(nodes), elements, dirichlet)
    corners = [(0.0, 0.0), (height, 0.0), (height, height), (0.0, height)]
    nodes = [[i * bay_length, y, z] for i in range(bays + 1) for y, z in corners]
    for i in range(bays):
        a, b = 4 * i, 4 * (i + 1)
        for k in range(4):
            elements.append(Element(BAR, (a + k, b + k), area))
            elements.append(Element(BAR, (a + k, b + (k + 1) % 4), area))
            elements.append(Element(BAR, (b + k, b + (k + 1) % 4), area))
        elements.append(Element(BAR, (b, b + 2), area))
    dirichlet = [(n, c) for n in range(4) for c in range(3)]
    return Mesh(np.array(nodes), elements, dirichlet)


def surface_load(mesh: Mesh, direction: int, magnitude) -> np.ndarray:
    """Lumped nodal forces of a traction spread over the triangles' faces.

    ``magnitude`` is a constant (force per unit face area) or a callable of
    the node coordinates, giving a spatially varying traction.  Each
    triangle sends a third of its area to each of its nodes.
    """
    tributary = np.zeros(mesh.n_nodes)
    for el, vol in zip(mesh.elements, mesh.volumes):
        if el.kind == TRI:
            tributary[list(el.nodes)] += vol / el.area / 3.0
    density = magnitude(mesh.nodes) if callable(magnitude) else np.full(mesh.n_nodes, float(magnitude))
    f = np.zeros(mesh.ndof)
    f[direction::mesh.dim] = tributary * density
    f[mesh.fixed_dofs] = 0.0
    return f


def nodal_load(mesh: Mesh, entries) -> np.ndarray:
    """Point loads from ``(node, component, value)`` triples."""
    f = np.zeros(mesh.ndof)
    for node, comp, value in entries:
        f[int(node) * mesh.dim + int(comp)] += float(value)
    f[mesh.fixed_dofs] = 0.0
    return f


def tip_load(mesh: Mesh, direction: int, magnitude: float) -> np.ndarray:
    """Total force ``magnitude`` shared equally by the nodes at maximal x."""
    x = mesh.nodes[:, 0]
    tip = np.flatnonzero(np.isclose(x, x.max()))
    return nodal_load(mesh, [(n, direction, magnitude / len(tip)) for n in tip])


def boundary_nodes(mesh: Mesh) -> np.ndarray:
    """Nodes on triangle edges used by a single triangle, or every node for bar meshes."""
    if not any(el.kind == TRI for el in mesh.elements):
        return np.arange(mesh.n_nodes)
    count = {}
    for el in mesh.elements:
        if el.kind != TRI:
            continue
        a, b, c = el.nodes
        for edge in ((a, b), (b, c), (c, a)):
            key = tuple(sorted(edge))
            count[key] = count.get(key, 0) + 1
    nodes = {n for edge, k in count.items() if k == 1 for n in edge}
    return np.array(sorted(nodes), dtype=int)


def dof_coordinates(mesh: Mesh) -> np.ndarray:
    """Coordinates of the node carrying each dof (one row per dof)."""
    return np.repeat(mesh.nodes, mesh.dim, axis=0)
