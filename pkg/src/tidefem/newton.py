"""Newton's method for the per-step problem with nonlinear damping.

The drag term C u is replaced by a monotone law g(u); the Jacobian then
has the same block structure as the linear problem with C replaced by
the pointwise derivative g'(u0), so every linear solve can reuse the
weighted-norm preconditioners.  The full preconditioner is rebuilt from
g'(u0) at each iteration; the lite variant is damping-free and can stay
frozen across iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from tidefem.assembly import (
    BlockSystem,
    Preconditioner,
    PrecondKind,
    TideParams,
    _eval_coefficient,
    assemble_matrix_weighted_mass,
    assemble_riesz_velocity_block,
    assemble_scalar_mass,
    build_preconditioner,
    build_system,
)
from tidefem.fespace import DofMap, quad_rule, tabulate_all
from tidefem.krylov import SolverConfig, gmres
from tidefem.sparse import FactorKind, factorize


@dataclass
class DampingLaw:
    """Pointwise damping g and its derivative, both vectorized.

    g maps (..., 2) velocity samples to (..., 2) values; g_prime returns
    the (..., 2, 2) derivative.  Monotonicity (v^T g'(u) v >= 0) is what
    keeps the Jacobian's damping block positive semidefinite.
    """

    g: object
    g_prime: object


def cubic_law() -> DampingLaw:
    """g(u) = |u|^2 u, the smooth power law used in the experiments."""

    def g(u):
        return (u**2).sum(axis=-1, keepdims=True) * u

    def g_prime(u):
        norm2 = (u**2).sum(axis=-1)
        eye = np.zeros(u.shape + (2,))
        eye[..., 0, 0] = norm2
        eye[..., 1, 1] = norm2
        return eye + 2.0 * u[..., :, None] * u[..., None, :]

    return DampingLaw(g, g_prime)


def zero_law() -> DampingLaw:
    """No damping; reduces every Newton structure to the linear problem."""
    return DampingLaw(
        lambda u: np.zeros_like(u),
        lambda u: np.zeros(u.shape + (2,)),
    )


@dataclass
class NonlinearProblem:
    """Steady canonical problem with nonlinear damping.

    system is the undamped (C = 0) block system; b the reduced right
    hand side.  Tabulations at the damping quadrature are cached.
    """

    system: BlockSystem
    law: DampingLaw
    b: np.ndarray
    degree: int = 4

    def __post_init__(self):
        V = self.system.V
        self._rule = quad_rule(V.mesh.cell_kind, self.degree)
        self._tabs = tabulate_all(V, self._rule)
        h = _eval_coefficient(self.system.params.H, self._tabs.points)
        factor = self._tabs.dets[:, None] * self._tabs.weights[None, :]
        self._kh_factor = self.system.params.k * factor / h

    def velocity_at_quadrature(self, u_reduced: np.ndarray) -> np.ndarray:
        """(ncells, nq, 2) velocity samples from reduced coefficients."""
        full = self.system.embed(u_reduced)
        coeffs = full[self.system.V.cell_dofs]
        return np.einsum("cl,clqi->cqi", coeffs, self._tabs.values)

    def damping_vector(self, u_reduced: np.ndarray) -> np.ndarray:
        """Reduced load vector of (k/H) (g(u), psi_i)."""
        gq = np.asarray(self.law.g(self.velocity_at_quadrature(u_reduced)))
        local = np.einsum(
            "cq,cqx,clqx->cl", self._kh_factor, gq, self._tabs.values
        )
        out = np.zeros(self.system.V.ndofs)
        np.add.at(out, self.system.V.cell_dofs, local)
        return out[self.system.interior]

    def gprime_at_quadrature(self, u_reduced: np.ndarray) -> np.ndarray:
        return np.asarray(self.law.g_prime(self.velocity_at_quadrature(u_reduced)))


def residual(problem: NonlinearProblem, x: np.ndarray) -> np.ndarray:
    """F(x) = A0 x + [damping(u); 0] - b."""
    system = problem.system
    out = system.apply(x) - problem.b
    u, _ = system.split(x)
    out[: system.n_u] += problem.damping_vector(u)
    return out


def jacobian(problem: NonlinearProblem, x: np.ndarray) -> BlockSystem:
    """Linearization at x: the linear system with C <-> g'(u0)."""
    system = problem.system
    u, _ = system.split(x)
    gpq = problem.gprime_at_quadrature(u)
    params = system.params
    hq = _eval_coefficient(params.H, problem._tabs.points)
    if np.ndim(hq):
        hq = hq[..., None, None]
    damp = assemble_matrix_weighted_mass(
        system.V, problem._rule, params.k * gpq / hq
    ).submatrix(system.interior, system.interior)
    return replace(system, Mcheck=system.Mcheck + damp)


def _riesz_from_state(
    problem: NonlinearProblem, u_reduced: np.ndarray
) -> Preconditioner:
    """Full weighted-norm preconditioner rebuilt from g'(u0)."""
    system = problem.system
    params = system.params
    P_V = assemble_riesz_velocity_block(
        params,
        system.V,
        include_damping=True,
        include_plain_mass=False,
        gprime_q=problem.gprime_at_quadrature(u_reduced),
        degree=problem.degree,
    ).submatrix(system.interior, system.interior)
    P_W = assemble_scalar_mass(system.W).scaled(params.sprime)
    return Preconditioner(
        PrecondKind.RIESZ,
        P_V,
        P_W,
        system.n_u,
        system.n_eta,
        factorize(P_V, FactorKind.SPD_CHOLESKY),
        1.0 / P_W.diag(),
    )


@dataclass
class NewtonResult:
    u: np.ndarray
    eta: np.ndarray
    newton_iterations: int
    linear_iterations: list[int]
    seed_iterations: int
    residual_norms: list[float]
    converged: bool


def newton_solve(
    params: TideParams,
    V: DofMap,
    W: DofMap,
    source,
    law: DampingLaw | None = None,
    pc_kind: PrecondKind | str = PrecondKind.RIESZ,
    cfg: SolverConfig | None = None,
    tol_abs: float = 1e-10,
    tol_rel: float = 1e-8,
    max_newton: int = 50,
    degree: int = 4,
) -> NewtonResult:
    """Solve the steady nonlinear-damping problem.

    Newton is seeded with the solution of the linear undamped problem
    and stops when ||F|| <= max(tol_abs, tol_rel * ||F(seed)||).  With
    pc_kind RIESZ the preconditioner is rebuilt from g'(u0) at every
    iteration; RIESZ_LITE keeps the damping-free operator throughout.
    """
    law = law or cubic_law()
    pc_kind = PrecondKind(pc_kind)
    if pc_kind not in (PrecondKind.RIESZ, PrecondKind.RIESZ_LITE):
        raise ValueError("nonlinear solves use the riesz or riesz-lite preconditioner")
    params0 = replace(params, C=0.0)
    system = build_system(params0, V, W)
    b = np.zeros(system.n)
    if source is not None:
        from tidefem.assembly import assemble_scalar_rhs

        b[system.n_u :] = params0.sprime * assemble_scalar_rhs(W, source, degree)
    problem = NonlinearProblem(system, law, b, degree)

    # At the zero state g'(0) has no contribution, so the seed solve and
    # the frozen lite preconditioner share the same operator.
    pc_lite = build_preconditioner(params0, V, W, PrecondKind.RIESZ_LITE)
    x, seed_report = gmres(system.apply, pc_lite.apply, b, cfg=cfg)

    res = residual(problem, x)
    res0 = np.linalg.norm(res)
    tol = max(tol_abs, tol_rel * res0)
    history = [res0]
    lin_iters: list[int] = []
    newton_its = 0
    while np.linalg.norm(res) > tol:
        if newton_its >= max_newton:
            u, eta = system.split(x)
            return NewtonResult(
                u, eta, newton_its, lin_iters, seed_report.iterations, history, False
            )
        J = jacobian(problem, x)
        if pc_kind is PrecondKind.RIESZ:
            pc = _riesz_from_state(problem, system.split(x)[0])
        else:
            pc = pc_lite
        delta, rep = gmres(J.apply, pc.apply, -res, cfg=cfg)
        x = x + delta
        lin_iters.append(rep.iterations)
        newton_its += 1
        res = residual(problem, x)
        history.append(float(np.linalg.norm(res)))
    u, eta = system.split(x)
    return NewtonResult(
        u, eta, newton_its, lin_iters, seed_report.iterations, history, True
    )


def cn_step_nonlinear(
    state_u: np.ndarray,
    state_eta: np.ndarray,
    system: BlockSystem,
    law: DampingLaw,
    pc_kind: PrecondKind | str = PrecondKind.RIESZ,
    cfg: SolverConfig | None = None,
    tol_abs: float = 1e-12,
    tol_rel: float = 1e-10,
    max_newton: int = 50,
    degree: int = 4,
) -> tuple[np.ndarray, np.ndarray, int]:
    """One trapezoidal step of the damped system (damping averaged).

    The system must be the undamped (C = 0) operator built with k =
    dt/2; the step solves A0 x + [k/H g(u_new); 0] = rhs(u_old) -
    [k/H g(u_old); 0], which keeps the energy nonincreasing for
    monotone odd laws.
    """
    from tidefem.assembly import step_rhs

    problem = NonlinearProblem(system, law, np.zeros(system.n), degree)
    rhs = step_rhs(system, state_u, state_eta)
    rhs[: system.n_u] -= problem.damping_vector(state_u)
    problem.b = rhs

    pc_kind = PrecondKind(pc_kind)
    pc_lite = build_preconditioner(
        system.params, system.V, system.W, PrecondKind.RIESZ_LITE
    )
    x = system.join(state_u, state_eta)
    res = residual(problem, x)
    res0 = np.linalg.norm(res)
    tol = max(tol_abs, tol_rel * res0)
    its = 0
    while np.linalg.norm(res) > tol and its < max_newton:
        J = jacobian(problem, x)
        if pc_kind is PrecondKind.RIESZ:
            pc = _riesz_from_state(problem, system.split(x)[0])
        else:
            pc = pc_lite
        delta, _ = gmres(J.apply, pc.apply, -res, cfg=cfg)
        x = x + delta
        res = residual(problem, x)
        its += 1
    u, eta = system.split(x)
    return u, eta, its
