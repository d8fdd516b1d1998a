"""Lowest-order H(div) elements, piecewise constants, and quadrature.

The velocity space attaches one degree of freedom per mesh edge: the
integral of the normal component over the edge, taken with the global
edge normal.  Basis functions are built on the reference cell and pushed
to physical cells with the contravariant Piola map, then flipped by the
cell/edge orientation sign so every DOF is single-valued across cells.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from tidefem.mesh import CellKind, Mesh


class FeFamily(Enum):
    RT1_TRIANGLE = "rt1_tri"
    RTC1_QUAD = "rtc1_quad"
    DG0 = "dg0"


_RT_FOR_KIND = {
    CellKind.TRIANGLE: FeFamily.RT1_TRIANGLE,
    CellKind.QUAD: FeFamily.RTC1_QUAD,
}


@dataclass
class QuadRule:
    """Quadrature points and weights on the reference cell."""

    cell_kind: CellKind
    degree: int
    points: np.ndarray  # (nq, 2)
    weights: np.ndarray  # (nq,), sums to the reference cell measure


# Degree-4 Dunavant rule on the reference triangle (two orbits of three
# points each, all weights positive).  Also serves degree 3: the common
# positive degree-3 rules carry a negative centroid weight.
_DUNAVANT4_A = 0.445948490915965
_DUNAVANT4_B = 0.091576213509771
_DUNAVANT4_WA = 0.223381589678011 / 2.0
_DUNAVANT4_WB = 0.109951743655322 / 2.0


def quad_rule(cell_kind: CellKind, degree: int) -> QuadRule:
    """Return a rule exact for polynomials of the given total degree.

    Triangle rules are tabulated (degrees 1-4, positive weights); square
    rules are tensor Gauss-Legendre on [0, 1]^2.
    """
    cell_kind = CellKind(cell_kind)
    if degree not in (1, 2, 3, 4):
        raise ValueError(f"unsupported quadrature degree {degree}")

    if cell_kind is CellKind.TRIANGLE:
        if degree == 1:
            pts = np.array([[1 / 3, 1 / 3]])
            wts = np.array([0.5])
        elif degree == 2:
            pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
            wts = np.full(3, 1 / 6)
        else:
            a, b = _DUNAVANT4_A, _DUNAVANT4_B
            pts = np.array(
                [
                    [a, a],
                    [1 - 2 * a, a],
                    [a, 1 - 2 * a],
                    [b, b],
                    [1 - 2 * b, b],
                    [b, 1 - 2 * b],
                ]
            )
            wts = np.array([_DUNAVANT4_WA] * 3 + [_DUNAVANT4_WB] * 3)
    else:
        n = degree // 2 + 1
        x, w = np.polynomial.legendre.leggauss(n)
        x = 0.5 * (x + 1.0)
        w = 0.5 * w
        xx, yy = np.meshgrid(x, x, indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel()])
        wts = np.outer(w, w).ravel()
    return QuadRule(cell_kind, degree, pts, wts)


def gauss_1d(npoints: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(npoints)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass
class DofMap:
    """Map from (cell, local basis function) to signed global DOFs."""

    family: FeFamily
    mesh: Mesh
    ndofs: int
    cell_dofs: np.ndarray  # (nc, nloc) int
    cell_signs: np.ndarray  # (nc, nloc) int, all +1 for DG0
    boundary_dofs: np.ndarray  # global DOF indices on the boundary (RT only)

    @property
    def interior_dofs(self) -> np.ndarray:
        """DOF indices that survive strong u.n = 0 boundary elimination."""
        keep = np.ones(self.ndofs, dtype=bool)
        keep[self.boundary_dofs] = False
        return np.flatnonzero(keep)


def build_dofmap(mesh: Mesh, family: FeFamily) -> DofMap:
    """Attach DOFs to mesh entities: one per edge (RT) or per cell (DG0)."""
    family = FeFamily(family)
    if family is FeFamily.DG0:
        nc = mesh.num_cells
        return DofMap(
            family=family,
            mesh=mesh,
            ndofs=nc,
            cell_dofs=np.arange(nc, dtype=np.int64)[:, None],
            cell_signs=np.ones((nc, 1), dtype=np.int64),
            boundary_dofs=np.empty(0, dtype=np.int64),
        )
    if _RT_FOR_KIND[mesh.cell_kind] is not family:
        raise ValueError(f"family {family} incompatible with {mesh.cell_kind} mesh")
    return DofMap(
        family=family,
        mesh=mesh,
        ndofs=mesh.num_edges,
        cell_dofs=mesh.cell_edges.copy(),
        cell_signs=mesh.cell_edge_signs.copy(),
        boundary_dofs=mesh.boundary_edges.copy(),
    )


def _reference_basis(family: FeFamily, points: np.ndarray):
    """Reference shape functions with unit outward flux on their own edge.

    Returns values (nloc, nq, 2) and constant divergences (nloc,).
    """
    x, y = points[:, 0], points[:, 1]
    zero = np.zeros_like(x)
    if family is FeFamily.RT1_TRIANGLE:
        # Local edge l is opposite reference vertex opp(l); psi = x - v_opp.
        vals = np.stack(
            [
                np.stack([x - 0.0, y - 1.0], axis=-1),  # edge (0,1), opp (0,1)
                np.stack([x - 0.0, y - 0.0], axis=-1),  # edge (1,2), opp (0,0)
                np.stack([x - 1.0, y - 0.0], axis=-1),  # edge (2,0), opp (1,0)
            ]
        )
        divs = np.full(3, 2.0)
    elif family is FeFamily.RTC1_QUAD:
        vals = np.stack(
            [
                np.stack([zero, y - 1.0], axis=-1),  # bottom
                np.stack([x, zero], axis=-1),  # right
                np.stack([zero, y], axis=-1),  # top
                np.stack([x - 1.0, zero], axis=-1),  # left
            ]
        )
        divs = np.ones(4)
    else:
        raise ValueError("tabulation is defined for the RT families only")
    return vals, divs


def _jacobians(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Affine cell Jacobians (nc, 2, 2) and determinants (nc,)."""
    pts = mesh.vertices[mesh.cells]
    if mesh.cell_kind is CellKind.TRIANGLE:
        cols = (pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 0])
    else:
        cols = (pts[:, 1] - pts[:, 0], pts[:, 3] - pts[:, 0])
    jac = np.stack(cols, axis=-1)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    return jac, det


@dataclass
class BasisTable:
    """Physical-cell basis values at quadrature points.

    values[l, q] is the vector value of local basis function l at point
    q, divs[l] its (cellwise constant) divergence, points[q] the
    physical quadrature point.
    """

    values: np.ndarray  # (nloc, nq, 2)
    divs: np.ndarray  # (nloc,)
    points: np.ndarray  # (nq, 2)


def tabulate(dofmap: DofMap, cell: int, rule: QuadRule) -> BasisTable:
    """Tabulate the signed, Piola-mapped RT basis on one physical cell."""
    tabs = tabulate_all(dofmap, rule)
    return BasisTable(
        values=tabs.values[cell], divs=tabs.divs[cell], points=tabs.points[cell]
    )


@dataclass
class CellTables:
    """Vectorized tabulation over every cell (assembly workhorse)."""

    values: np.ndarray  # (nc, nloc, nq, 2)
    divs: np.ndarray  # (nc, nloc)
    points: np.ndarray  # (nc, nq, 2)
    dets: np.ndarray  # (nc,)
    weights: np.ndarray  # (nq,) reference weights


def tabulate_all(dofmap: DofMap, rule: QuadRule) -> CellTables:
    mesh = dofmap.mesh
    if rule.cell_kind is not mesh.cell_kind:
        raise ValueError("quadrature rule does not match the mesh cell kind")
    ref_vals, ref_divs = _reference_basis(dofmap.family, rule.points)
    jac, det = _jacobians(mesh)
    if np.any(det <= 0):
        raise ValueError("degenerate cell: nonpositive Jacobian determinant")

    signs = dofmap.cell_signs.astype(float)
    # Contravariant Piola: value -> J v / det, divergence -> div / det.
    vals = np.einsum("cij,lqj->clqi", jac, ref_vals) / det[:, None, None, None]
    vals *= signs[:, :, None, None]
    divs = signs * ref_divs[None, :] / det[:, None]

    p0 = mesh.vertices[mesh.cells[:, 0]]
    points = p0[:, None, :] + np.einsum("cij,qj->cqi", jac, rule.points)
    return CellTables(vals, divs, points, det, rule.weights.copy())


def interpolate_rt(dofmap: DofMap, fn, npoints: int = 3) -> np.ndarray:
    """Edge-flux interpolant: coefficients are integrals of fn . n over edges."""
    mesh = dofmap.mesh
    t, w = gauss_1d(npoints)
    lo = mesh.vertices[mesh.edges[:, 0]]
    hi = mesh.vertices[mesh.edges[:, 1]]
    normals = mesh.edge_normals()
    lengths = mesh.edge_lengths()
    coeffs = np.zeros(dofmap.ndofs)
    for ti, wi in zip(t, w):
        pts = lo + ti * (hi - lo)
        fvals = np.asarray(fn(pts[:, 0], pts[:, 1]))
        coeffs += wi * lengths * (fvals[0] * normals[:, 0] + fvals[1] * normals[:, 1])
    return coeffs


def interpolate_dg0(dofmap: DofMap, fn, degree: int = 4) -> np.ndarray:
    """Cellwise means of a scalar function (the L2 projection onto DG0)."""
    mesh = dofmap.mesh
    rule = quad_rule(mesh.cell_kind, degree)
    jac, det = _jacobians(mesh)
    p0 = mesh.vertices[mesh.cells[:, 0]]
    points = p0[:, None, :] + np.einsum("cij,qj->cqi", jac, rule.points)
    fvals = np.asarray(fn(points[..., 0], points[..., 1]))
    integrals = det * (fvals @ rule.weights)
    return integrals / mesh.cell_areas()
