"""Adapter from ConicProgram to an interior-point conic solver through cvxpy."""

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional

import cvxpy as cp
import numpy as np
from scipy import sparse

from src.core.conic.program import SQRT2, ConeKind, ConicProgram
from src.core.config import settings

logger = logging.getLogger(__name__)


class SolveStatus(str, Enum):
    """Outcome of one conic solve."""
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_LIMIT = "numerical_limit"


@dataclass
class SolverSettings:
    """Tolerances and iteration cap handed to the backend."""
    solver: str = field(default_factory=lambda: settings.SOLVER_NAME)
    feas_tol: float = field(default_factory=lambda: settings.SOLVER_FEAS_TOL)
    gap_tol: float = field(default_factory=lambda: settings.SOLVER_GAP_TOL)
    max_iters: int = field(default_factory=lambda: settings.SOLVER_MAX_ITERS)
    accept_tol: float = field(default_factory=lambda: settings.ACCEPT_TOL)
    verbose: bool = False

    def backend_options(self) -> Dict[str, float]:
        if self.solver.upper() == "CLARABEL":
            return {
                "max_iter": self.max_iters,
                "tol_feas": self.feas_tol,
                "tol_gap_abs": self.gap_tol,
                "tol_gap_rel": self.gap_tol,
            }
        if self.solver.upper() == "SCS":
            return {"max_iters": max(self.max_iters, 10000), "eps": self.feas_tol}
        return {}


@dataclass
class SolveStats:
    iterations: int = 0
    solve_time_ms: float = 0.0
    backend_status: str = ""


@dataclass
class ConicSolution:
    """Primal answer with the checks used to trust it."""
    status: SolveStatus
    primal: np.ndarray
    objective_value: float
    stats: SolveStats
    primal_residual: float = float("nan")
    cone_violation: float = float("nan")
    dual_eq: Optional[np.ndarray] = None
    duality_gap: float = float("nan")

    @property
    def ok(self) -> bool:
        return self.status == SolveStatus.OPTIMAL


_STATUS_MAP = {
    cp.OPTIMAL: SolveStatus.OPTIMAL,
    cp.OPTIMAL_INACCURATE: SolveStatus.OPTIMAL,
    cp.INFEASIBLE: SolveStatus.INFEASIBLE,
    cp.INFEASIBLE_INACCURATE: SolveStatus.INFEASIBLE,
    cp.UNBOUNDED: SolveStatus.UNBOUNDED,
    cp.UNBOUNDED_INACCURATE: SolveStatus.UNBOUNDED,
}


def _svec_map(m: int) -> sparse.csr_matrix:
    """Sparse map from column-major vec(Z) to the scaled upper-triangle storage."""
    rows, cols = np.triu_indices(m)
    data, r_idx, c_idx = [], [], []
    for r, (i, j) in enumerate(zip(rows, cols)):
        if i == j:
            data.append(1.0)
            r_idx.append(r)
            c_idx.append(i + j * m)
        else:
            for col in (i + j * m, j + i * m):
                data.append(1.0 / SQRT2)
                r_idx.append(r)
                c_idx.append(col)
    return sparse.csr_matrix((data, (r_idx, c_idx)), shape=(len(rows), m * m))


def solve(program: ConicProgram, solver_settings: Optional[SolverSettings] = None) -> ConicSolution:
    """Solve `program`; never raises on infeasible or unbounded input."""
    opts = solver_settings or SolverSettings()
    x = cp.Variable(program.n_vars)
    constraints = []
    eq = None
    if program.b.size:
        eq = cp.Constant(program.A) @ x == program.b
        constraints.append(eq)
    for block in program.cone_blocks:
        s = block.slice
        if block.kind == ConeKind.NONNEGATIVE:
            constraints.append(x[s] >= 0)
        elif block.kind == ConeKind.SECOND_ORDER:
            constraints.append(cp.SOC(x[block.start], x[block.start + 1:block.stop]))
        else:
            m = block.dim
            Z = cp.Variable((m, m), PSD=True)
            constraints.append(x[s] == cp.Constant(_svec_map(m)) @ cp.reshape(Z, (m * m,), order="F"))

    problem = cp.Problem(cp.Minimize(program.objective @ x), constraints)
    started = time.perf_counter()
    try:
        problem.solve(solver=opts.solver, verbose=opts.verbose, **opts.backend_options())
        backend_status = problem.status
    except cp.error.SolverError as exc:
        logger.warning(f"Solver failure on {program.name!r}: {exc}")
        backend_status = "solver_error"
    elapsed_ms = (time.perf_counter() - started) * 1e3

    stats = SolveStats(solve_time_ms=elapsed_ms, backend_status=str(backend_status))
    if problem.solver_stats is not None:
        stats.iterations = int(problem.solver_stats.num_iters or 0)
        if problem.solver_stats.solve_time is not None:
            stats.solve_time_ms = 1e3 * float(problem.solver_stats.solve_time)

    status = _STATUS_MAP.get(backend_status, SolveStatus.NUMERICAL_LIMIT)
    if status != SolveStatus.OPTIMAL or x.value is None:
        if status == SolveStatus.OPTIMAL:
            status = SolveStatus.NUMERICAL_LIMIT
        logger.debug(f"Program {program.name!r} finished with status {status.value}")
        return ConicSolution(status, np.full(program.n_vars, np.nan), float("nan"), stats)

    primal = np.asarray(x.value, dtype=float)
    residual = program.primal_residual(primal)
    violation = program.cone_violation(primal)
    dual = None if eq is None or eq.dual_value is None else np.asarray(eq.dual_value, dtype=float)
    value = program.evaluate(primal)
    # dual objective of min c'x, Ax = b, x in K is -b'y under cvxpy's sign convention
    gap = float("nan") if dual is None else abs(float(program.objective @ primal + program.b @ dual))

    if residual > opts.accept_tol or violation > opts.accept_tol:
        logger.warning(
            f"Program {program.name!r}: residual {residual:.2e}, cone violation "
            f"{violation:.2e} above {opts.accept_tol:.0e} ({backend_status})"
        )
        status = SolveStatus.NUMERICAL_LIMIT
    elif backend_status == cp.OPTIMAL_INACCURATE:
        logger.warning(f"Program {program.name!r}: inaccurate optimum accepted after checks")

    return ConicSolution(
        status=status,
        primal=primal,
        objective_value=value,
        stats=stats,
        primal_residual=residual,
        cone_violation=violation,
        dual_eq=dual,
        duality_gap=gap,
    )
