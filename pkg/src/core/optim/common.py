"""Shared pieces of the iterative optimizers: options, traces, diagnosis."""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Set

import numpy as np

from src.core.beamforming.sinr import reduced_radar_sinr_from, reduced_uplink_sinr_from
from src.core.channel.scenario import Scenario
from src.core.conic.program import AffineExpr, ConicBuilder, ConicProgram
from src.core.conic.solver import SolverSettings, SolveStatus, solve
from src.core.config import settings
from src.core.exceptions import InfeasibleError

logger = logging.getLogger(__name__)

SLACK_PREFIX = "slack:"


@dataclass
class ScaOptions:
    """Knobs shared by the SCA and AO loops."""
    epsilon: float = field(default_factory=lambda: settings.SCA_EPSILON)
    max_iters: int = field(default_factory=lambda: settings.SCA_MAX_ITERS)
    restoration_iters: int = field(default_factory=lambda: settings.RESTORATION_MAX_ITERS)
    power_unit: float = field(default_factory=lambda: settings.POWER_UNIT_W)
    rank_tol: float = field(default_factory=lambda: settings.RANK_TOL)
    solver: SolverSettings = field(default_factory=SolverSettings)
    init: Optional[object] = None  # TxDesign in watts overriding the default start

    def __post_init__(self):
        if self.epsilon <= 0 or self.max_iters < 1:
            raise ValueError("epsilon must be positive and max_iters >= 1")


def relative_change(previous: float, current: float) -> float:
    return abs(current - previous) / max(abs(previous), 1e-30)


def q_bar(blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Sum of all covariance blocks."""
    return np.sum(np.stack(list(blocks)), axis=0)


def relaxed_downlink_sinrs(blocks: Sequence[np.ndarray], scenario: Scenario) -> np.ndarray:
    """g_l^H V_l g_l / (g_l^H (Qbar - V_l) g_l + sigma_l^2) with blocks = [V_0, V_1, ...]."""
    Q = q_bar(blocks)
    out = []
    for l, g in enumerate(scenario.downlink_channels):
        own = float(np.real(np.vdot(g, blocks[l + 1] @ g)))
        total = float(np.real(np.vdot(g, Q @ g)))
        out.append(own / (total - own + scenario.noise_dl[l]))
    return np.array(out)


def relaxed_sinrs(blocks: Sequence[np.ndarray], ul_powers: np.ndarray, scenario: Scenario) -> Dict[str, np.ndarray]:
    """SINRs of a rank-relaxed design at the optimal receivers."""
    Q = q_bar(blocks)
    return {
        "radar": np.array(reduced_radar_sinr_from(Q, ul_powers, scenario)),
        "uplink": np.array([reduced_uplink_sinr_from(k, Q, ul_powers, scenario) for k in range(scenario.n_ul)]),
        "downlink": relaxed_downlink_sinrs(blocks, scenario),
    }


def slack_row(sinrs: Dict[str, np.ndarray], tau_rad: Optional[float],
              tau_ul: Optional[Iterable[float]], tau_dl: Optional[Iterable[float]]) -> Dict[str, float]:
    """achieved / required - 1, worst user per family; NaN when absent."""
    def worst(values: np.ndarray, taus) -> float:
        if taus is None or values.size == 0:
            return float("nan")
        return float(np.min(values / np.asarray(list(taus), dtype=float)) - 1.0)

    return {
        "radar_slack": float(sinrs["radar"]) / tau_rad - 1.0 if tau_rad else float("nan"),
        "min_ul_slack": worst(sinrs["uplink"], tau_ul),
        "min_dl_slack": worst(sinrs["downlink"], tau_dl),
    }


def max_rank_ratio(matrices: Iterable[np.ndarray]) -> float:
    """max over matrices of lambda_2 / lambda_1 (0 for zero or 1x1 matrices)."""
    worst = 0.0
    for M in matrices:
        eig = np.sort(np.linalg.eigvalsh(M))[::-1]
        if eig.size > 1 and eig[0] > 0:
            worst = max(worst, float(max(eig[1], 0.0) / eig[0]))
    return worst


def add_slack(builder: ConicBuilder, expr: AffineExpr, family: str) -> AffineExpr:
    """expr + r with a fresh r >= 0 named after `family` (unchanged if the family is disabled)."""
    if not builder.enabled(family):
        return expr
    (r,) = builder.nonneg(1, f"{SLACK_PREFIX}{family}")
    return expr + AffineExpr.var(r)


def minimize_slack(builder: ConicBuilder, power: AffineExpr) -> None:
    """Restoration objective: total slack plus a small power term that keeps the iterate bounded."""
    ids = builder.group_ids(SLACK_PREFIX)
    slack = AffineExpr.linear(ids, np.ones(ids.size))
    builder.minimize(slack + power * settings.RESTORATION_POWER_WEIGHT)


def slack_values(program: ConicProgram, x: np.ndarray) -> Dict[str, float]:
    return {
        name[len(SLACK_PREFIX):]: float(max(np.sum(x[ids]), 0.0))
        for name, ids in program.groups.items()
        if name.startswith(SLACK_PREFIX)
    }


@dataclass
class Restoration:
    """Outcome of a slack-penalized SCA run."""
    anchor: Any
    steps: int
    slacks: Dict[str, float]
    feasible: bool


def restore(
    build: Callable[[Any], ConicProgram],
    advance: Callable[[ConicProgram, np.ndarray], Any],
    anchor: Any,
    options: ScaOptions,
) -> Restoration:
    """Iterate slack-penalized surrogates from `anchor` until no constraint needs slack.

    Each surrogate is feasible by construction and its Taylor bounds are
    re-expanded at the previous solution, so the penalized objective never grows.
    Stops when the slack drops below RESTORATION_TOL (feasible) or stalls.
    """
    slacks: Dict[str, float] = {}
    previous = np.inf
    step = 0
    for step in range(1, options.restoration_iters + 1):
        program = build(anchor)
        solution = solve(program, options.solver)
        if solution.status != SolveStatus.OPTIMAL:
            logger.info(f"Restoration step {step}: surrogate {solution.status.value}")
            return Restoration(anchor, step, slacks, False)
        slacks = slack_values(program, solution.primal)
        anchor = advance(program, solution.primal)
        total = sum(slacks.values())
        logger.debug(f"Restoration step {step}: total slack {total:.3e}")
        if total <= settings.RESTORATION_TOL:
            return Restoration(anchor, step, slacks, True)
        if np.isfinite(previous) and previous - total <= options.epsilon * previous:
            break
        previous = total
    return Restoration(anchor, step, slacks, False)


def restore_or_diagnose(
    build_for: Callable[[Set[str]], Callable[[Any], ConicProgram]],
    advance: Callable[[ConicProgram, np.ndarray], Any],
    anchor: Any,
    families: Sequence[str],
    options: ScaOptions,
) -> Restoration:
    """Restore a feasible anchor, or name the family whose removal makes restoration succeed.

    Families are tried in order of the slack they still needed.

    Raises:
        InfeasibleError: Restoration failed with every family enabled
    """
    result = restore(build_for(set()), advance, anchor, options)
    if result.feasible:
        logger.info(f"Feasibility restored after {result.steps} steps")
        return result
    ranked = sorted(families, key=lambda family: -result.slacks.get(family, 0.0))
    for family in ranked:
        if restore(build_for({family}), advance, anchor, options).feasible:
            logger.info(f"Infeasibility traced to the {family} constraints")
            raise InfeasibleError(family)
    raise InfeasibleError("unknown")


def constraint_families(n_ul: int, n_dl: int, radar: bool = True) -> List[str]:
    families = ["radar"] if radar else []
    families += [f"uplink-{k}" for k in range(n_ul)]
    families += [f"downlink-{l}" for l in range(n_dl)]
    return families
