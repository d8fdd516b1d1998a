"""Restarted, left-preconditioned GMRES.

Orthogonalization is modified Gram-Schmidt with one reorthogonalization
pass; the small least-squares problem is updated with Givens rotations,
so the preconditioned residual norm is available at every inner
iteration without forming the iterate.  Convergence is declared on
||P^-1 (b - A x)|| <= max(rtol * ||P^-1 b||, atol).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SolverConfig:
    """GMRES controls; restart 100 mirrors the reference solver stack."""

    rtol: float = 1e-8
    atol: float = 1e-50
    restart: int = 100
    maxit: int = 10000

    def __post_init__(self):
        if self.rtol <= 0:
            raise ValueError("rtol must be positive")
        if self.restart < 1 or self.maxit < 1:
            raise ValueError("restart and maxit must be at least 1")


@dataclass
class SolveReport:
    iterations: int
    converged: bool
    relres: float


def gmres(
    apply_A,
    apply_Pinv,
    b: np.ndarray,
    x0: np.ndarray | None = None,
    cfg: SolverConfig | None = None,
):
    """Solve A x = b with left preconditioning.

    Parameters
    ----------
    apply_A, apply_Pinv : callables
        Operator and preconditioner actions on vectors.
    b : array
        Right-hand side.
    x0 : array, optional
        Initial guess (zero by default).
    cfg : SolverConfig, optional

    Returns
    -------
    (x, SolveReport)
        ``iterations`` counts all inner iterations across restarts.
    """
    cfg = cfg or SolverConfig()
    if apply_Pinv is None:
        apply_Pinv = lambda r: r
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)

    bnorm = np.linalg.norm(apply_Pinv(b))
    tol = max(cfg.rtol * bnorm, cfg.atol)
    if bnorm == 0.0 and x0 is None:
        return x, SolveReport(0, True, 0.0)

    m = cfg.restart
    total = 0
    while True:
        r = apply_Pinv(b - apply_A(x))
        beta = np.linalg.norm(r)
        if beta <= tol:
            rel = beta / bnorm if bnorm > 0 else beta
            return x, SolveReport(total, True, rel)
        if total >= cfg.maxit:
            rel = beta / bnorm if bnorm > 0 else beta
            return x, SolveReport(total, False, rel)

        Q = np.zeros((n, m + 1))
        Hmat = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        Q[:, 0] = r / beta
        g[0] = beta

        j = 0
        breakdown = False
        while j < m and total < cfg.maxit:
            # Copy: operators may return their input (e.g. identity), and
            # the Gram-Schmidt update below works in place on w.
            w = np.array(apply_Pinv(apply_A(Q[:, j])), dtype=float)
            # Modified Gram-Schmidt, then one full reorthogonalization pass.
            h = np.zeros(j + 2)
            for _ in range(2):
                for i in range(j + 1):
                    hij = Q[:, i] @ w
                    h[i] += hij
                    w -= hij * Q[:, i]
            h[j + 1] = np.linalg.norm(w)
            Hmat[: j + 2, j] = h

            # Apply accumulated rotations, then eliminate the new subdiagonal.
            for i in range(j):
                t = cs[i] * Hmat[i, j] + sn[i] * Hmat[i + 1, j]
                Hmat[i + 1, j] = -sn[i] * Hmat[i, j] + cs[i] * Hmat[i + 1, j]
                Hmat[i, j] = t
            denom = np.hypot(Hmat[j, j], Hmat[j + 1, j])
            if denom == 0.0:
                breakdown = True  # exact stagnation; residual already minimal
                break
            cs[j] = Hmat[j, j] / denom
            sn[j] = Hmat[j + 1, j] / denom
            Hmat[j, j] = denom
            Hmat[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]

            total += 1
            resid = abs(g[j + 1])
            if h[j + 1] <= 1e-14 * max(beta, 1.0):
                # Happy breakdown: the Krylov space is invariant.
                j += 1
                breakdown = True
                break
            Q[:, j + 1] = w / h[j + 1]
            j += 1
            if resid <= tol:
                break

        if j > 0:
            y = np.linalg.solve(np.triu(Hmat[:j, :j]), g[:j])
            x = x + Q[:, :j] @ y

        r = apply_Pinv(b - apply_A(x))
        beta = np.linalg.norm(r)
        rel = beta / bnorm if bnorm > 0 else beta
        if beta <= tol:
            return x, SolveReport(total, True, rel)
        if breakdown or total >= cfg.maxit:
            return x, SolveReport(total, beta <= tol, rel)
