"""Experiment harness: parameter sweeps over the steady benchmark problem.

Each sweep point assembles the canonical per-step system on the unit
square, applies the chosen block preconditioner with exact (sparse
direct) inner solves, runs restarted GMRES from a zero initial guess on
the steady problem with continuity-equation source sin(pi x) cos(pi y),
and records the iteration count.  Results are written as small CSV
tables (one header row, LF endings); identical invocations produce
byte-identical files.

Modes
-----
mesh-sweep    rows "N,iterations" per time-step value
keps-sweep    rows "k,iterations" per Rossby number
nonlinear     rows "N,Lin" (linear iterations of the final Newton step)
spectral      dense singular-value bounds of the preconditioned operator
energy        Crank-Nicolson energy trace, rows "t,E"
convergence   temporal self-convergence errors, rows "dt,error,ratio"
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from tidefem import newton, stepper, verify
from tidefem.assembly import (
    PrecondKind,
    TideParams,
    assemble_scalar_rhs,
    build_preconditioner,
    build_system,
)
from tidefem.fespace import (
    FeFamily,
    build_dofmap,
    interpolate_dg0,
    interpolate_rt,
)
from tidefem.krylov import SolverConfig, gmres
from tidefem.mesh import CellKind, build_structured


def steady_source(x, y):
    """Continuity-equation source of the steady benchmark problem."""
    return np.sin(np.pi * x) * np.cos(np.pi * y)


def rt_family(cell: CellKind) -> FeFamily:
    return FeFamily.RT1_TRIANGLE if cell is CellKind.TRIANGLE else FeFamily.RTC1_QUAD


def make_spaces(N: int, cell: CellKind):
    mesh = build_structured(N, cell)
    return build_dofmap(mesh, rt_family(cell)), build_dofmap(mesh, FeFamily.DG0)


def smooth_initial_state(V, W) -> stepper.State:
    """Divergence-free stream-function velocity and a smooth elevation.

    The velocity is curl(sin(pi x) sin(pi y)), which satisfies u.n = 0
    on the boundary of the unit square exactly.
    """

    def u0(x, y):
        return (
            np.pi * np.sin(np.pi * x) * np.cos(np.pi * y),
            -np.pi * np.cos(np.pi * x) * np.sin(np.pi * y),
        )

    def eta0(x, y):
        return np.cos(np.pi * x) * np.cos(np.pi * y)

    u_full = interpolate_rt(V, u0)
    return stepper.State(u_full[V.interior_dofs], interpolate_dg0(W, eta0), 0.0)


@dataclass
class ExperimentSpec:
    """One harness invocation; lists drive sweep grids."""

    mode: str
    cell: CellKind = CellKind.TRIANGLE
    pc: PrecondKind = PrecondKind.RIESZ
    Ns: tuple[int, ...] = (8, 16, 32, 64)
    ks: tuple[float, ...] = (1e-2,)
    epss: tuple[float, ...] = (0.01,)
    beta: float = 0.1
    C: float = 1.0
    f: float = 1.0
    rtol: float = 1e-8
    restart: int = 100
    maxit: int = 10000
    out: Path = Path("out.csv")
    quad_degree: int | None = None
    steps: int = 100
    T: float = 0.5
    jobs: int = 1

    def __post_init__(self):
        self.cell = CellKind(self.cell)
        self.pc = PrecondKind(self.pc)
        self.out = Path(self.out)
        if not self.Ns or not self.ks or not self.epss:
            raise ValueError("N, k, and eps lists must be nonempty")
        if any(n < 1 for n in self.Ns):
            raise ValueError("mesh subdivisions must be positive")

    def params(self, k: float, eps: float) -> TideParams:
        return TideParams(eps=eps, k=k, beta=self.beta, C=self.C, f=self.f, H=1.0)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(rtol=self.rtol, restart=self.restart, maxit=self.maxit)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _suffixed(out: Path, tag: str, multiple: bool) -> Path:
    if not multiple:
        return out
    return out.with_name(f"{out.stem}.{tag}{out.suffix}")


def _steady_point(args) -> tuple[int, bool]:
    """Worker: solve one steady benchmark instance, return (iters, converged)."""
    (N, cell, pc, k, eps, beta, C, f, rtol, restart, maxit, qdeg) = args
    V, W = make_spaces(N, CellKind(cell))
    params = TideParams(eps=eps, k=k, beta=beta, C=C, f=f, H=1.0)
    system = build_system(params, V, W, degree=qdeg)
    pc_op = build_preconditioner(params, V, W, PrecondKind(pc), degree=qdeg)
    b = np.zeros(system.n)
    b[system.n_u :] = params.sprime * assemble_scalar_rhs(W, steady_source)
    cfg = SolverConfig(rtol=rtol, restart=restart, maxit=maxit)
    _, report = gmres(system.apply, pc_op.apply, b, cfg=cfg)
    return report.iterations, report.converged


def _nonlinear_point(args) -> tuple[int, bool]:
    """Worker: steady solve with cubic damping; returns final-step linear count."""
    (N, cell, pc, k, eps, beta, f, rtol, restart, maxit, qdeg) = args
    V, W = make_spaces(N, CellKind(cell))
    params = TideParams(eps=eps, k=k, beta=beta, C=0.0, f=f, H=1.0)
    cfg = SolverConfig(rtol=rtol, restart=restart, maxit=maxit)
    result = newton.newton_solve(
        params, V, W, steady_source, newton.cubic_law(), PrecondKind(pc), cfg
    )
    lin = result.linear_iterations[-1] if result.linear_iterations else result.seed_iterations
    return lin, result.converged


def _pool_map(fn, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def run_mesh_sweep(spec: ExperimentSpec) -> bool:
    """Iteration count versus mesh size, one CSV per time-step value."""
    ok = True
    for k in spec.ks:
        items = [
            (N, spec.cell.value, spec.pc.value, k, eps, spec.beta, spec.C, spec.f,
             spec.rtol, spec.restart, spec.maxit, spec.quad_degree)
            for eps in spec.epss[:1]
            for N in spec.Ns
        ]
        results = _pool_map(_steady_point, items, spec.jobs)
        rows = []
        for N, (iters, conv) in zip(spec.Ns, results):
            rows.append([_fmt(N), _fmt(iters if conv else -1)])
            ok = ok and conv
        path = _suffixed(spec.out, f"k{k:g}", len(spec.ks) > 1)
        write_csv(path, ["N", "iterations"], rows)
        print(f"wrote {path}")
    return ok


def run_keps_sweep(spec: ExperimentSpec) -> bool:
    """Iteration count versus time step, one CSV per Rossby number."""
    N = spec.Ns[0]
    ok = True
    for eps in spec.epss:
        items = [
            (N, spec.cell.value, spec.pc.value, k, eps, spec.beta, spec.C, spec.f,
             spec.rtol, spec.restart, spec.maxit, spec.quad_degree)
            for k in spec.ks
        ]
        results = _pool_map(_steady_point, items, spec.jobs)
        rows = []
        for k, (iters, conv) in zip(spec.ks, results):
            rows.append([_fmt(float(k)), _fmt(iters if conv else -1)])
            ok = ok and conv
        path = _suffixed(spec.out, f"eps{eps:g}", len(spec.epss) > 1)
        write_csv(path, ["k", "iterations"], rows)
        print(f"wrote {path}")
    return ok


def run_nonlinear(spec: ExperimentSpec, law: str = "cubic") -> bool:
    """Newton with cubic damping; records final-step linear iterations.

    A zero damping law (law="none") makes the problem linear, so the
    degenerate sweep goes through the same solve as run_mesh_sweep with
    C = 0 and reproduces its counts exactly.
    """
    if spec.pc not in (PrecondKind.RIESZ, PrecondKind.RIESZ_LITE):
        raise ValueError("nonlinear mode requires --pc riesz or riesz-lite")
    if law not in ("cubic", "none"):
        raise ValueError(f"unknown damping law {law!r}")
    ok = True
    for k in spec.ks:
        if law == "none":
            items = [
                (N, spec.cell.value, spec.pc.value, k, spec.epss[0], spec.beta, 0.0,
                 spec.f, spec.rtol, spec.restart, spec.maxit, spec.quad_degree)
                for N in spec.Ns
            ]
            results = _pool_map(_steady_point, items, spec.jobs)
        else:
            items = [
                (N, spec.cell.value, spec.pc.value, k, spec.epss[0], spec.beta, spec.f,
                 spec.rtol, spec.restart, spec.maxit, spec.quad_degree)
                for N in spec.Ns
            ]
            results = _pool_map(_nonlinear_point, items, spec.jobs)
        rows = []
        for N, (lin, conv) in zip(spec.Ns, results):
            rows.append([_fmt(N), _fmt(lin if conv else -1)])
            ok = ok and conv
        path = _suffixed(spec.out, f"k{k:g}", len(spec.ks) > 1)
        write_csv(path, ["N", "Lin"], rows)
        print(f"wrote {path}")
    return ok


def run_spectral(spec: ExperimentSpec) -> bool:
    """Dense singular-value verification over the (N, k, eps) grid."""
    if spec.pc not in (PrecondKind.RIESZ, PrecondKind.RIESZ_LITE):
        raise ValueError("spectral mode requires --pc riesz or riesz-lite")
    reports = []
    for N in spec.Ns:
        for k in spec.ks:
            for eps in spec.epss:
                reports.append(
                    verify.spectral_report(N, spec.cell, spec.params(k, eps), spec.pc)
                )
    verify.write_spectral_csv(reports, spec.out)
    print(f"wrote {spec.out}")
    return all(r.within_bounds() for r in reports)


def run_energy(spec: ExperimentSpec) -> bool:
    """Unforced Crank-Nicolson run from smooth initial data; trace t, E."""
    N, k, eps = spec.Ns[0], spec.ks[0], spec.epss[0]
    V, W = make_spaces(N, spec.cell)
    params = spec.params(k, eps)
    state = smooth_initial_state(V, W)
    _, trace, _ = stepper.run(
        state, 2.0 * k, spec.steps, params, V, W, spec.pc, spec.solver_config()
    )
    trace.write_csv(spec.out)
    print(f"wrote {spec.out}")
    return True


def self_convergence_errors(
    spec: ExperimentSpec, refine: int = 32
) -> tuple[float, float, float]:
    """Errors at T against a dt/refine reference, for steps dt and dt/2.

    Error is measured in the scaled energy norm sqrt(2 E(difference)).
    Returns (err_dt, err_half, ratio); second-order stepping puts the
    ratio near 4.
    """
    N, k, eps = spec.Ns[0], spec.ks[0], spec.epss[0]
    V, W = make_spaces(N, spec.cell)
    params = spec.params(k, eps)
    dt = 2.0 * k
    T = spec.T
    cfg = spec.solver_config()
    initial = smooth_initial_state(V, W)

    def final_state(delta):
        n_steps = int(round(T / delta))
        if abs(n_steps * delta - T) > 1e-12 * T:
            raise ValueError(f"T = {T} is not an integer number of steps of {delta}")
        state, _, _ = stepper.run(initial, delta, n_steps, params, V, W, spec.pc, cfg)
        return state

    ref = final_state(dt / refine)
    system = build_system(replace(params, k=dt / (2.0 * refine)), V, W)

    def err(state):
        diff = stepper.State(state.u - ref.u, state.eta - ref.eta)
        return float(np.sqrt(2.0 * stepper.energy(diff, system)))

    e1 = err(final_state(dt))
    e2 = err(final_state(dt / 2.0))
    return e1, e2, e1 / e2


def run_convergence(spec: ExperimentSpec) -> bool:
    e1, e2, ratio = self_convergence_errors(spec)
    dt = 2.0 * spec.ks[0]
    rows = [
        [_fmt(float(dt)), _fmt(e1), ""],
        [_fmt(float(dt / 2.0)), _fmt(e2), _fmt(ratio)],
    ]
    write_csv(spec.out, ["dt", "error", "ratio"], rows)
    print(f"wrote {spec.out}")
    return True


_RUNNERS = {
    "mesh-sweep": run_mesh_sweep,
    "keps-sweep": run_keps_sweep,
    "nonlinear": run_nonlinear,
    "spectral": run_spectral,
    "energy": run_energy,
    "convergence": run_convergence,
}

_DEFAULTS = {
    "cell": "tri",
    "pc": "riesz",
    "N": "8,16,32,64",
    "k": "0.01",
    "eps": "0.01",
    "beta": 0.1,
    "C": 1.0,
    "f": 1.0,
    "rtol": 1e-8,
    "restart": 100,
    "maxit": 10000,
    "out": None,
    "quad_degree": None,
    "steps": 100,
    "T": 0.5,
    "jobs": 1,
}

_CONVERTERS = {
    "cell": str,
    "pc": str,
    "N": str,
    "k": str,
    "eps": str,
    "beta": float,
    "C": float,
    "f": float,
    "rtol": float,
    "restart": int,
    "maxit": int,
    "out": str,
    "quad_degree": int,
    "steps": int,
    "T": float,
    "jobs": int,
    "mode": str,
}


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in str(text).split(",") if part)


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in str(text).split(",") if part)


def read_config(path: Path) -> dict:
    """Parse a key=value config file; '#' starts a comment line."""
    values = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in _CONVERTERS:
            raise ValueError(f"unknown config key: {key}")
        values[key] = _CONVERTERS[key](val.strip())
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tidefem",
        description="Tide-model preconditioning experiments on the unit square.",
    )
    p.add_argument("--mode", choices=sorted(_RUNNERS), default=None)
    p.add_argument("--cell", choices=["tri", "quad"], default=None)
    p.add_argument("--pc", choices=["mass", "riesz", "riesz-lite", "none"], default=None)
    p.add_argument("--N", default=None, help="comma list of mesh subdivisions")
    p.add_argument("--k", default=None, help="comma list of half time steps")
    p.add_argument("--eps", default=None, help="comma list of Rossby numbers")
    p.add_argument("--beta", type=float, default=None, help="Burger number")
    p.add_argument("--C", type=float, default=None, help="drag coefficient")
    p.add_argument("--f", type=float, default=None, help="Coriolis parameter")
    p.add_argument("--rtol", type=float, default=None)
    p.add_argument("--restart", type=int, default=None)
    p.add_argument("--maxit", type=int, default=None)
    p.add_argument("--out", default=None, help="output CSV path")
    p.add_argument("--quad-degree", dest="quad_degree", type=int, default=None)
    p.add_argument("--steps", type=int, default=None, help="time steps (energy mode)")
    p.add_argument("--T", type=float, default=None, help="final time (convergence mode)")
    p.add_argument("--jobs", type=int, default=None, help="sweep worker processes")
    p.add_argument("--config", default=None, help="key=value config file; flags win")
    return p


def spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    merged = dict(_DEFAULTS)
    if args.config:
        merged.update(read_config(args.config))
    for key in _DEFAULTS:
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            merged[key] = cli_val
    mode = args.mode or merged.get("mode")
    if mode is None:
        raise ValueError("--mode is required (flag or config file)")
    out = merged["out"] or f"{mode}.csv"
    return ExperimentSpec(
        mode=mode,
        cell=CellKind(merged["cell"]),
        pc=PrecondKind(merged["pc"]),
        Ns=_parse_int_list(merged["N"]),
        ks=_parse_float_list(merged["k"]),
        epss=_parse_float_list(merged["eps"]),
        beta=merged["beta"],
        C=merged["C"],
        f=merged["f"],
        rtol=merged["rtol"],
        restart=merged["restart"],
        maxit=merged["maxit"],
        out=Path(out),
        quad_degree=merged["quad_degree"],
        steps=merged["steps"],
        T=merged["T"],
        jobs=merged["jobs"],
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = spec_from_args(args)
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    runner = _RUNNERS[spec.mode]
    ok = runner(spec)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
