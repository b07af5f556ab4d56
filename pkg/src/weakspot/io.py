"""Mesh text files, legacy VTK output and CSV/JSON artifacts.

Mesh file grammar (one record per line, ``#`` starts a comment, blank lines
ignored).  A line holding only a section keyword opens that section::

    dim 2                                   # optional, inferred from nodes
    nodes
    <id> <x> <y> [<z>]
    elements
    <id> bar <n1> <n2> <area>
    <id> tri <n1> <n2> <n3> <thickness>
    dirichlet
    <node> <component>
    sensors
    <id> <component> displacement [<measured> [<weight>]]
    <id> <component> strain [<measured> [<weight>]]

Node and element ids are 0-based and must appear in order.  For strain
sensors the id is an element id and the component indexes that element's
strain vector.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .exceptions import WeakspotError
from .fem import BAR, DISPLACEMENT, STRAIN, TRI, Element, Mesh, SensorSet

SECTIONS = ("nodes", "elements", "dirichlet", "sensors")


class MeshFormatError(WeakspotError, ValueError):
    pass


def read_mesh(path):
    """Parse a mesh file; returns ``(mesh, sensors)`` with ``sensors`` possibly None."""
    nodes, elements, dirichlet, sensors = [], [], [], []
    dim = None
    section = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if len(tok) == 1 and tok[0] in SECTIONS:
            section = tok[0]
            continue
        if tok[0] == "dim" and section is None:
            dim = int(tok[1])
            continue
        try:
            if section == "nodes":
                if int(tok[0]) != len(nodes):
                    raise MeshFormatError("node ids must be 0, 1, 2, ... in order")
                nodes.append([float(v) for v in tok[1:]])
            elif section == "elements":
                if int(tok[0]) != len(elements):
                    raise MeshFormatError("element ids must be 0, 1, 2, ... in order")
                kind = tok[1]
                n = 2 if kind == BAR else 3 if kind == TRI else None
                if n is None or len(tok) != 3 + n:
                    raise MeshFormatError(f"bad element record {line!r}")
                elements.append(Element(kind, tuple(int(v) for v in tok[2:2 + n]), float(tok[2 + n])))
            elif section == "dirichlet":
                dirichlet.append((int(tok[0]), int(tok[1])))
            elif section == "sensors":
                kind = tok[2]
                if kind not in (DISPLACEMENT, STRAIN):
                    raise MeshFormatError(f"unknown sensor kind {kind!r}")
                measured = float(tok[3]) if len(tok) > 3 else 0.0
                weight = float(tok[4]) if len(tok) > 4 else 1.0
                sensors.append((kind, int(tok[0]), int(tok[1]), measured, weight))
            else:
                raise MeshFormatError("record outside of any section")
        except (ValueError, IndexError) as exc:
            raise MeshFormatError(f"{path}:{lineno}: {exc}") from None
    if not nodes:
        raise MeshFormatError(f"{path}: no nodes")
    widths = {len(n) for n in nodes}
    if len(widths) != 1 or (dim is not None and widths != {dim}):
        raise MeshFormatError(f"{path}: inconsistent node dimension")
    mesh = Mesh(np.array(nodes), elements, dirichlet)
    sensor_set = None
    if sensors:
        kinds, idx, comp, meas, w = zip(*sensors)
        sensor_set = SensorSet(list(kinds), idx, comp, meas, w)
    return mesh, sensor_set


def write_mesh(path, mesh: Mesh, sensors: SensorSet | None = None):
    lines = [f"dim {mesh.dim}", "nodes"]
    lines += [f"{i} " + " ".join(repr(float(c)) for c in xyz) for i, xyz in enumerate(mesh.nodes)]
    lines.append("elements")
    for e, el in enumerate(mesh.elements):
        lines.append(f"{e} {el.kind} " + " ".join(map(str, el.nodes)) + f" {el.area!r}")
    lines.append("dirichlet")
    lines += [f"{n} {c}" for n, c in mesh.dirichlet]
    if sensors is not None and len(sensors):
        lines.append("sensors")
        for k, i, c, m, w in zip(sensors.kinds, sensors.index, sensors.component, sensors.measured, sensors.weights):
            lines.append(f"{i} {c} {k} {float(m)!r} {float(w)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


_VTK_CELL = {BAR: 3, TRI: 5}


def write_vtk(path, mesh: Mesh, cell_data=None, point_vectors=None, title="weakspot"):
    """Legacy ASCII unstructured grid with optional cell scalars and point vectors."""
    cell_data = cell_data or {}
    point_vectors = point_vectors or {}
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {mesh.n_nodes} double"]
    for xyz in mesh.nodes:
        p = list(xyz) + [0.0] * (3 - mesh.dim)
        out.append(" ".join(f"{v:.17g}" for v in p))
    size = sum(len(el.nodes) + 1 for el in mesh.elements)
    out.append(f"CELLS {mesh.n_elements} {size}")
    for el in mesh.elements:
        out.append(f"{len(el.nodes)} " + " ".join(map(str, el.nodes)))
    out.append(f"CELL_TYPES {mesh.n_elements}")
    out += [str(_VTK_CELL[el.kind]) for el in mesh.elements]
    if cell_data:
        out.append(f"CELL_DATA {mesh.n_elements}")
        for name, values in cell_data.items():
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [f"{v:.17g}" for v in np.asarray(values, dtype=float)]
    if point_vectors:
        out.append(f"POINT_DATA {mesh.n_nodes}")
        for name, values in point_vectors.items():
            v = np.asarray(values, dtype=float).reshape(mesh.n_nodes, mesh.dim)
            out.append(f"VECTORS {name} double")
            for row in v:
                p = list(row) + [0.0] * (3 - mesh.dim)
                out.append(" ".join(f"{x:.17g}" for x in p))
    Path(path).write_text("\n".join(out) + "\n")


def write_alpha_csv(path, mesh: Mesh, alpha):
    axes = "xyz"[:mesh.dim]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["element", "kind"] + [f"c{a}" for a in axes] + ["alpha"])
        for e, (el, c, a) in enumerate(zip(mesh.elements, mesh.centroids, alpha)):
            w.writerow([e, el.kind] + [f"{v:.17g}" for v in c] + [f"{a:.17g}"])


def write_convergence_csv(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "objective", "t", "step", "grad_norm", "backtracks"])
        for it, obj, t, step, gn, bt in history:
            w.writerow([it, f"{obj:.17g}", f"{t:.17g}", f"{step:.17g}", f"{gn:.17g}", bt])


def read_convergence_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_sensors_csv(path, sensors: SensorSet, predicted=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["sensor", "kind", "index", "component", "measured", "weight"]
        if predicted is not None:
            header.append("predicted")
        w.writerow(header)
        for j in range(len(sensors)):
            row = [j, sensors.kinds[j], int(sensors.index[j]), int(sensors.component[j]),
                   f"{sensors.measured[j]:.17g}", f"{sensors.weights[j]:.17g}"]
            if predicted is not None:
                row.append(f"{predicted[j]:.17g}")
            w.writerow(row)


def read_sensors_csv(path) -> SensorSet:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return SensorSet([r["kind"] for r in rows], [int(r["index"]) for r in rows],
                     [int(r["component"]) for r in rows], [float(r["measured"]) for r in rows],
                     [float(r["weight"]) for r in rows])


def write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
