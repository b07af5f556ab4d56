import numpy as np
import pytest

from weakspot.fem import BAR, Element, FEModel, Material, Mesh
from weakspot.meshes import ten_bar_truss


def dense_bar_stiffness(nodes, elements, E):
    """Independent dense assembly of a bar structure from the textbook c/s formula."""
    nodes = np.asarray(nodes, dtype=float)
    dim = nodes.shape[1]
    K = np.zeros((nodes.size, nodes.size))
    for (i, j), A, a in elements:
        d = nodes[j] - nodes[i]
        L = np.linalg.norm(d)
        n = d / L
        k = a * E * A / L * np.outer(n, n)
        for p, q, sgn in ((i, i, 1), (j, j, 1), (i, j, -1), (j, i, -1)):
            K[p * dim:(p + 1) * dim, q * dim:(q + 1) * dim] += sgn * k
    return K


@pytest.fixture
def five_bar():
    """Small 2-D truss: a braced square plus one diagonal, pinned on the left."""
    nodes = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    conn = [(0, 2), (1, 3), (2, 3), (1, 2), (0, 3)]
    mesh = Mesh(nodes, [Element(BAR, c, 2e-3) for c in conn], [(0, 0), (0, 1), (1, 0), (1, 1)])
    return mesh, Material(E=7e10)


@pytest.fixture
def ten_bar():
    mesh = ten_bar_truss(1.0, 1.0, 1e-3)
    return mesh, FEModel(mesh, Material(E=2e11))


ACCEPTANCE = []


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
