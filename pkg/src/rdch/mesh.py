"""Simplicial meshes for the relaxed Cahn-Hilliard solver.

Two generators are provided: uniform interval meshes in 1D and
diagonal-split square grids in 2D. Both are acute (right angles at most),
so the P1 stiffness matrix has nonpositive off-diagonal entries.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Invalid mesh parameters or connectivity."""


@dataclass(frozen=True)
class SimplicialMesh:
    """Conforming simplicial mesh in one or two dimensions.

    Attributes
    ----------
    dimension : int
        Spatial dimension, 1 or 2.
    vertices : ndarray, shape (n_nodes, dimension)
        Node coordinates.
    elements : ndarray, shape (n_elements, dimension + 1)
        Vertex indices per element; triangles are counterclockwise.
    edges : ndarray, shape (n_edges, 2)
        Unique undirected edges with ``edges[:, 0] < edges[:, 1]``.
    neighbor_sets : tuple of frozenset
        For each node, the nodes sharing an edge with it.
    dual_volumes : ndarray, shape (n_nodes,)
        Measure of the barycentric dual cell of each node.
    """

    dimension: int
    vertices: np.ndarray
    elements: np.ndarray
    edges: np.ndarray = field(repr=False)
    neighbor_sets: tuple = field(repr=False)
    dual_volumes: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def measure(self) -> float:
        return float(element_measures(self).sum())


@dataclass(frozen=True)
class MeshQuality:
    h: float
    kappa_h: float
    G_h: int
    is_acute: bool
    is_quasi_uniform_ratio: float


def element_measures(mesh: SimplicialMesh) -> np.ndarray:
    """Length (1D) or area (2D) of each element."""
    p = mesh.vertices[mesh.elements]
    if mesh.dimension == 1:
        return np.abs(p[:, 1, 0] - p[:, 0, 0])
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _finalize(dimension: int, vertices: np.ndarray, elements: np.ndarray) -> SimplicialMesh:
    vertices = np.ascontiguousarray(vertices, dtype=float)
    elements = np.ascontiguousarray(elements, dtype=np.int64)
    n_nodes = vertices.shape[0]
    if elements.min() < 0 or elements.max() >= n_nodes:
        raise MeshError("element vertex index out of range")
    for row in elements:
        if len(set(row.tolist())) != len(row):
            raise MeshError(f"element {row.tolist()} has repeated vertices")

    k = elements.shape[1]
    pairs = [elements[:, [a, b]] for a in range(k) for b in range(a + 1, k)]
    edges = np.sort(np.vstack(pairs), axis=1)
    edges = np.unique(edges, axis=0)

    neighbors = [set() for _ in range(n_nodes)]
    for i, j in edges:
        neighbors[i].add(int(j))
        neighbors[j].add(int(i))

    tmp = SimplicialMesh(dimension, vertices, elements, edges, (), np.empty(0))
    vol = element_measures(tmp)
    if dimension == 2:
        p = vertices[elements]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        if np.any(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] <= 0):
            raise MeshError("triangles must be counterclockwise and non-degenerate")
    dual = np.zeros(n_nodes)
    np.add.at(dual, elements.ravel(), np.repeat(vol / (dimension + 1), k))

    for arr in (vertices, elements, edges, dual):
        arr.flags.writeable = False
    return SimplicialMesh(
        dimension=dimension,
        vertices=vertices,
        elements=elements,
        edges=edges,
        neighbor_sets=tuple(frozenset(s) for s in neighbors),
        dual_volumes=dual,
    )


def build_interval_mesh(length: float, n_cells: int) -> SimplicialMesh:
    """Uniform partition of ``[0, length]`` into ``n_cells`` intervals."""
    if not (length > 0 and math.isfinite(length)):
        raise MeshError(f"length must be positive, got {length}")
    if int(n_cells) != n_cells or n_cells < 2:
        raise MeshError(f"n_cells must be an integer >= 2, got {n_cells}")
    n_cells = int(n_cells)
    x = np.linspace(0.0, length, n_cells + 1)
    elements = np.column_stack([np.arange(n_cells), np.arange(1, n_cells + 1)])
    return _finalize(1, x[:, None], elements)


def build_structured_triangle_mesh(length: float, n_cells_per_side: int) -> SimplicialMesh:
    """Square ``[0, length]^2`` split into ``n^2`` cells, each cut along the
    same diagonal into two right triangles."""
    if not (length > 0 and math.isfinite(length)):
        raise MeshError(f"length must be positive, got {length}")
    n = n_cells_per_side
    if int(n) != n or n < 2:
        raise MeshError(f"n_cells_per_side must be an integer >= 2, got {n}")
    n = int(n)
    s = np.linspace(0.0, length, n + 1)
    X, Y = np.meshgrid(s, s, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    jj, ii = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    v00 = (jj * (n + 1) + ii).ravel()
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    elements = np.empty((2 * n * n, 3), dtype=np.int64)
    elements[0::2] = lower
    elements[1::2] = upper
    return _finalize(2, vertices, elements)


def _triangle_angles(p: np.ndarray) -> np.ndarray:
    angles = np.empty(p.shape[:2])
    for a in range(3):
        u = p[:, (a + 1) % 3] - p[:, a]
        v = p[:, (a + 2) % 3] - p[:, a]
        cosang = np.einsum("ij,ij->i", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        angles[:, a] = np.arccos(np.clip(cosang, -1.0, 1.0))
    return angles


def compute_quality(mesh: SimplicialMesh) -> MeshQuality:
    """Diameter, minimal altitude, max node degree and acuteness."""
    p = mesh.vertices[mesh.elements]
    vol = element_measures(mesh)
    if mesh.dimension == 1:
        diam = vol
        kappa = vol
        acute = True
    else:
        lengths = np.stack(
            [np.linalg.norm(p[:, (a + 1) % 3] - p[:, a], axis=1) for a in range(3)], axis=1
        )
        diam = lengths.max(axis=1)
        # altitude onto the longest side is the shortest one
        kappa = 2.0 * vol / diam
        # right angles are admissible; allow round-off above pi/2
        acute = bool(np.all(_triangle_angles(p) <= 0.5 * np.pi + 1e-12))
    degree = max(len(s) for s in mesh.neighbor_sets)
    return MeshQuality(
        h=float(diam.max()),
        kappa_h=float(kappa.min()),
        G_h=int(degree),
        is_acute=acute,
        is_quasi_uniform_ratio=float(diam.max() / diam.min()),
    )


def write_mesh_csv(mesh: SimplicialMesh, directory: str | Path) -> tuple[Path, Path]:
    """Dump ``nodes.csv`` (index, coordinates) and ``elements.csv``
    (index, vertex indices) for debugging."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    axes = ["x", "y"][: mesh.dimension]
    nodes_path = directory / "nodes.csv"
    elems_path = directory / "elements.csv"
    with open(nodes_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", *axes])
        for i, xy in enumerate(mesh.vertices):
            w.writerow([i, *(repr(float(c)) for c in xy)])
    with open(elems_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", *(f"v{a}" for a in range(mesh.dimension + 1))])
        for k, row in enumerate(mesh.elements):
            w.writerow([k, *row.tolist()])
    return nodes_path, elems_path
