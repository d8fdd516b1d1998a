"""Dense-algebra verification of the preconditioner spectral bounds.

Everything here runs through LAPACK on dense matrices (Cholesky, full
SVD, generalized symmetric eigensolves), independent of the sparse
factorization path used by the production solver, so it doubles as an
oracle for that path.  With P = L L^T, the singular values of
L^{-1} A L^{-T} are exactly the discrete inf-sup constant (smallest) and
continuity constant (largest) of the per-step bilinear form in the norm
induced by P; the theory pins them inside

    [sqrt(3)/6,  max{2, 1 + k/eps}]            (full weighted norm)
    [sqrt(3)/6,  (1 + C* k) max{2, 1 + k/eps}] (damping-free norm)

for every mesh and every admissible parameter choice.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from tidefem.assembly import (
    PrecondKind,
    TideParams,
    assemble_divdiv,
    assemble_weighted_vector_mass,
    build_preconditioner,
    build_system,
)
from tidefem.fespace import FeFamily, build_dofmap
from tidefem.mesh import CellKind, build_structured, mesh_size

BOUND_LO = np.sqrt(3.0) / 6.0
DENSE_LIMIT = 2000


@dataclass
class SpectralReport:
    """Extreme singular values of the preconditioned operator."""

    sigma_min: float
    sigma_max: float
    bound_lo: float
    bound_hi: float
    N: int | None = None
    k: float | None = None
    eps: float | None = None
    beta: float | None = None
    C: float | None = None

    def within_bounds(self, tol: float = 1e-10) -> bool:
        return (
            self.sigma_min >= self.bound_lo - tol
            and self.sigma_max <= self.bound_hi + tol
        )


def continuity_bound(params: TideParams, kind: PrecondKind | str) -> float:
    """Theoretical upper bound on the preconditioned singular values."""
    kind = PrecondKind(kind)
    K = max(2.0, 1.0 + params.k / params.eps)
    if kind is PrecondKind.RIESZ_LITE:
        return (1.0 + params.C_star * params.k) * K
    if kind is PrecondKind.RIESZ:
        return K
    raise ValueError(f"no continuity bound implemented for {kind}")


def preconditioned_svals(
    A: np.ndarray, P: np.ndarray, bound_hi: float = np.inf
) -> SpectralReport:
    """Singular values of L^{-1} A L^{-T} where P = L L^T.

    The smallest is the discrete inf-sup constant of the bilinear form
    in the P-norm, the largest its continuity constant.
    """
    A = np.asarray(A, dtype=float)
    P = np.asarray(P, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or P.shape != (n, n):
        raise ValueError("operator and preconditioner dimensions differ")
    if n > DENSE_LIMIT:
        raise ValueError(f"dense verification is capped at n = {DENSE_LIMIT}")
    if n == 0:
        return SpectralReport(np.nan, np.nan, BOUND_LO, bound_hi)
    L = np.linalg.cholesky(P)  # raises LinAlgError if P is not SPD
    Y = sla.solve_triangular(L, A, lower=True)
    B = sla.solve_triangular(L, Y.T, lower=True).T
    svals = np.linalg.svd(B, compute_uv=False)
    return SpectralReport(float(svals[-1]), float(svals[0]), BOUND_LO, bound_hi)


def spectral_report(
    N: int,
    cell_kind: CellKind,
    params: TideParams,
    kind: PrecondKind | str = PrecondKind.RIESZ,
) -> SpectralReport:
    """Assemble the reduced system at desk scale and report its spectrum."""
    mesh = build_structured(N, cell_kind)
    fam = (
        FeFamily.RT1_TRIANGLE
        if cell_kind is CellKind.TRIANGLE
        else FeFamily.RTC1_QUAD
    )
    V = build_dofmap(mesh, fam)
    W = build_dofmap(mesh, FeFamily.DG0)
    system = build_system(params, V, W)
    pc = build_preconditioner(params, V, W, kind)
    report = preconditioned_svals(
        system.to_dense(), pc.to_dense(), continuity_bound(params, kind)
    )
    report.N = N
    report.k = params.k
    report.eps = params.eps
    report.beta = params.beta
    report.C = params.C_star
    return report


def check_bounds_sweep(
    grid, cell_kind: CellKind = CellKind.TRIANGLE, kind=PrecondKind.RIESZ
) -> list[SpectralReport]:
    """Spectral reports over an iterable of (N, k, eps, beta, C) tuples."""
    reports = []
    for N, k, eps, beta, C in grid:
        params = TideParams(eps=eps, k=k, beta=beta, C=C)
        reports.append(spectral_report(N, cell_kind, params, kind))
    return reports


def write_spectral_csv(reports: list[SpectralReport], path) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["N", "k", "eps", "beta", "C", "sigma_min", "sigma_max", "bound_lo", "bound_hi"]
        )
        for r in reports:
            writer.writerow(
                [r.N]
                + [
                    repr(float(v))
                    for v in (
                        r.k,
                        r.eps,
                        r.beta,
                        r.C,
                        r.sigma_min,
                        r.sigma_max,
                        r.bound_lo,
                        r.bound_hi,
                    )
                ]
            )


def norm_equivalence(P_full: np.ndarray, P_lite: np.ndarray) -> tuple[float, float]:
    """Extreme generalized eigenvalues of P_lite x = lambda P_full x.

    For the weighted inner product and its damping-free variant the
    ratios satisfy 1/(1 + C* k) <= lambda <= 1.
    """
    vals = sla.eigh(np.asarray(P_lite), np.asarray(P_full), eigvals_only=True)
    return float(vals[0]), float(vals[-1])


def measure_inverse_constant(
    Ns=(2, 4, 8, 16), cell_kind: CellKind = CellKind.TRIANGLE
) -> list[tuple[int, float, float, float]]:
    """Empirical inverse-estimate constant: h * max ||div u|| / ||u||.

    Returns (N, h, sigma_max, h * sigma_max) per mesh; the last column
    stabilizing under refinement is the finite-element inverse
    assumption made quantitative.
    """
    out = []
    fam = (
        FeFamily.RT1_TRIANGLE
        if cell_kind is CellKind.TRIANGLE
        else FeFamily.RTC1_QUAD
    )
    for N in Ns:
        mesh = build_structured(N, cell_kind)
        V = build_dofmap(mesh, fam)
        dd = assemble_divdiv(V, 1.0).to_dense()
        mass = assemble_weighted_vector_mass(V, 1.0).to_dense()
        lam = sla.eigh(dd, mass, eigvals_only=True)[-1]
        sigma = float(np.sqrt(max(lam, 0.0)))
        h = mesh_size(mesh)
        out.append((N, h, sigma, h * sigma))
    return out


def dense_lu_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense LAPACK LU solve; the oracle partner of the iterative path."""
    return sla.lu_solve(sla.lu_factor(np.asarray(A, dtype=float)), b)
