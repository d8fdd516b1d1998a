"""Mixed finite elements and weighted-norm block preconditioners for tide models.

The package discretizes the linearized rotating shallow-water equations
with lowest-order Raviart-Thomas / piecewise-constant pairs, advances
them by Crank-Nicolson, and solves the per-step block system with
restarted GMRES under block-diagonal preconditioners built from weighted
inner products.
"""

from tidefem.assembly import (
    BlockSystem,
    PrecondKind,
    Preconditioner,
    TideParams,
    build_preconditioner,
    build_system,
    step_rhs,
)
from tidefem.fespace import DofMap, FeFamily, build_dofmap, quad_rule, tabulate
from tidefem.krylov import SolveReport, SolverConfig, gmres
from tidefem.mesh import CellKind, Mesh, build_structured, mesh_size
from tidefem.sparse import CsrMatrix, FactorKind, factorize, solve, spmv
from tidefem.stepper import EnergyTrace, State, cn_step, energy, run

__all__ = [
    "BlockSystem",
    "CellKind",
    "CsrMatrix",
    "DofMap",
    "EnergyTrace",
    "FactorKind",
    "FeFamily",
    "Mesh",
    "PrecondKind",
    "Preconditioner",
    "SolveReport",
    "SolverConfig",
    "State",
    "TideParams",
    "build_dofmap",
    "build_preconditioner",
    "build_structured",
    "build_system",
    "cn_step",
    "energy",
    "factorize",
    "gmres",
    "mesh_size",
    "quad_rule",
    "run",
    "solve",
    "spmv",
    "step_rhs",
    "tabulate",
]

__version__ = "0.1.0"
