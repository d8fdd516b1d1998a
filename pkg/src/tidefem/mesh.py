"""Structured meshes of the unit square with oriented edges.

The mesh is the backbone of the whole discretization: Raviart-Thomas
degrees of freedom live on edges, so every edge carries a globally
consistent orientation (tangent from the lower- to the higher-numbered
vertex, normal = tangent rotated 90 degrees clockwise).  Each cell
records, for each of its local edges, the sign relating its own outward
normal to the global edge normal.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class CellKind(Enum):
    TRIANGLE = "tri"
    QUAD = "quad"


# Local edges traverse the cell boundary counterclockwise.
_LOCAL_EDGES = {
    CellKind.TRIANGLE: ((0, 1), (1, 2), (2, 0)),
    CellKind.QUAD: ((0, 1), (1, 2), (2, 3), (3, 0)),
}


@dataclass
class Mesh:
    """Structured triangulation or quadrangulation of the unit square.

    Attributes
    ----------
    cell_kind : CellKind
        Triangle or quad cells.
    N : int
        Subdivisions per side; the grid has N*N squares.
    vertices : (nv, 2) float array
        Vertex coordinates, row-major numbering (x fastest).
    cells : (nc, 3 or 4) int array
        Vertex indices per cell, counterclockwise.
    edges : (ne, 2) int array
        Vertex pairs, lower index first, sorted lexicographically.
    cell_edges : (nc, nloc) int array
        Global edge index for each local edge of each cell.
    cell_edge_signs : (nc, nloc) int array
        +1 where the cell's outward normal agrees with the global edge
        normal, -1 otherwise.
    boundary_edges : (nb,) int array
        Sorted indices of edges on the domain boundary.
    """

    cell_kind: CellKind
    N: int
    vertices: np.ndarray
    cells: np.ndarray
    edges: np.ndarray
    cell_edges: np.ndarray
    cell_edge_signs: np.ndarray
    boundary_edges: np.ndarray

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def num_cells(self) -> int:
        return self.cells.shape[0]

    def cell_areas(self) -> np.ndarray:
        """Signed areas of all cells (positive for counterclockwise cells)."""
        pts = self.vertices[self.cells]  # (nc, nloc, 2)
        x, y = pts[..., 0], pts[..., 1]
        xn, yn = np.roll(x, -1, axis=1), np.roll(y, -1, axis=1)
        return 0.5 * np.sum(x * yn - xn * y, axis=1)

    def edge_tangents(self) -> np.ndarray:
        """Unit tangents pointing from the lower- to the higher-numbered vertex."""
        vec = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return vec / np.linalg.norm(vec, axis=1)[:, None]

    def edge_normals(self) -> np.ndarray:
        """Global unit normals: tangent rotated 90 degrees clockwise."""
        t = self.edge_tangents()
        return np.column_stack([t[:, 1], -t[:, 0]])

    def edge_lengths(self) -> np.ndarray:
        vec = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.linalg.norm(vec, axis=1)

    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])


def build_structured(N: int, cell_kind: CellKind) -> Mesh:
    """Build an N x N structured mesh of the unit square.

    For ``CellKind.TRIANGLE`` every square is split along the same
    diagonal, from its lower-left to its upper-right corner, so meshes
    (and hence solver iteration counts) are fully deterministic.

    Parameters
    ----------
    N : int
        Number of squares per side, N >= 1.
    cell_kind : CellKind
        Cell shape.

    Returns
    -------
    Mesh
    """
    if N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    cell_kind = CellKind(cell_kind)

    n1 = N + 1
    ij = np.arange(n1)
    xx, yy = np.meshgrid(ij / N, ij / N, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()]).astype(float)

    def vid(i, j):
        return j * n1 + i

    cells = []
    for j in range(N):
        for i in range(N):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v11, v01 = vid(i + 1, j + 1), vid(i, j + 1)
            if cell_kind is CellKind.QUAD:
                cells.append((v00, v10, v11, v01))
            else:
                cells.append((v00, v10, v11))  # below the diagonal
                cells.append((v00, v11, v01))  # above the diagonal
    cells = np.asarray(cells, dtype=np.int64)

    local = _LOCAL_EDGES[cell_kind]
    a = cells[:, [p[0] for p in local]]
    b = cells[:, [p[1] for p in local]]
    pairs = np.stack([np.minimum(a, b), np.maximum(a, b)], axis=-1)  # (nc, nloc, 2)

    flat = pairs.reshape(-1, 2)
    edges, inverse = np.unique(flat, axis=0, return_inverse=True)
    cell_edges = inverse.reshape(pairs.shape[:2]).astype(np.int64)
    # The cell traverses its boundary counterclockwise, so its outward
    # normal on a local edge is the clockwise rotation of the traversal
    # direction.  It matches the global normal exactly when the cell
    # traverses the edge from the lower to the higher vertex index.
    cell_edge_signs = np.where(a < b, 1, -1).astype(np.int64)

    counts = np.bincount(cell_edges.ravel(), minlength=edges.shape[0])
    boundary_edges = np.flatnonzero(counts == 1)

    return Mesh(
        cell_kind=cell_kind,
        N=N,
        vertices=vertices,
        cells=cells,
        edges=edges,
        cell_edges=cell_edges,
        cell_edge_signs=cell_edge_signs,
        boundary_edges=boundary_edges,
    )


def mesh_size(mesh: Mesh) -> float:
    """Maximum cell diameter (largest vertex-to-vertex distance within a cell)."""
    pts = mesh.vertices[mesh.cells]  # (nc, nloc, 2)
    diff = pts[:, :, None, :] - pts[:, None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())
