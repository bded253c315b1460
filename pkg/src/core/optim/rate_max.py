"""Sum-rate maximization by successive convex approximation.

The uplink rates are carried by auxiliary variables u_k <= x_k^2 <= p_k f_k
where f_k is the Taylor under-estimator of h_k^H Phi_k^-1 h_k. Downlink rates
are split into log(signal plus interference plus noise) minus a linearized
log(interference plus noise). Every remaining log term is replaced at its
anchor z0 by log z >= log z0 + 1 - z0/z, which a rotated cone represents
exactly, so each surrogate stays within the nonnegative/SOC/PSD cones.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, NamedTuple, Optional, Sequence, Set, Tuple

import numpy as np

from src.core.beamforming.design import RxDesign, SinrReport, TxDesign
from src.core.beamforming.sinr import evaluate_design
from src.core.channel.scenario import Scenario, normalize_scenario
from src.core.conic.program import AffineExpr, ConicBuilder, ConicProgram, affine_sum
from src.core.conic.solver import SolveStatus, solve
from src.core.exceptions import IterationLimitError, SolverStallError
from src.core.optim.common import (
    Restoration,
    ScaOptions,
    minimize_slack,
    relative_change,
    relaxed_sinrs,
    restore_or_diagnose,
    slack_row,
)
from src.core.optim.power_min import (
    ScaState,
    add_radar_subset,
    phi_matrix,
    uplink_bound_expr,
    uplink_taylor_bound,
)
from src.core.optim.rank_one import rank_one_extract

logger = logging.getLogger(__name__)

LOG2E = float(np.log2(np.e))
X_FLOOR = 1e-9


@dataclass(frozen=True)
class RateMaxSpec:
    """Scenario (power budgets included) plus the radar SINR threshold."""
    scenario: Scenario
    tau_rad: float

    def __post_init__(self):
        if not self.tau_rad > 0:
            raise ValueError(f"tau_rad must be positive, got {self.tau_rad}")

    def normalized(self, power_unit: float) -> "RateMaxSpec":
        return replace(self, scenario=normalize_scenario(self.scenario, power_unit))


@dataclass
class RateScaState(ScaState):
    """Relaxed iterate with the auxiliary uplink-rate variables u_k and x_k."""
    u_aux: np.ndarray = field(default_factory=lambda: np.zeros(0))
    x_aux: np.ndarray = field(default_factory=lambda: np.zeros(0))  # unit free, like p_k f_k
    rate_trace: List[float] = field(default_factory=list)


class RateMaxResult(NamedTuple):
    state: RateScaState
    tx: TxDesign
    rx: RxDesign
    report: SinrReport
    sum_rate: float


def _dl_gains(l: int, blocks: Sequence[np.ndarray], scenario: Scenario) -> Tuple[float, float]:
    """(total received power, interference power) at downlink user l."""
    g = scenario.downlink_channels[l]
    per_block = [float(np.real(np.vdot(g, V @ g))) for V in blocks]
    total = sum(per_block)
    return total, total - per_block[l + 1]


def _dl_linearization(l: int, anchor_blocks: Sequence[np.ndarray], scenario: Scenario) -> Tuple[float, float, float]:
    """a_l = log2(I_l0 + sigma_l^2), slope log2(e)/2^a_l and the anchor interference I_l0."""
    _, interference = _dl_gains(l, anchor_blocks, scenario)
    level = interference + scenario.noise_dl[l]
    return float(np.log2(level)), LOG2E / level, interference


def dl_rate_lower_bound(l: int, V_blocks: Sequence[np.ndarray], anchor_blocks: Sequence[np.ndarray],
                        scenario: Scenario) -> float:
    """log2(sum_l' g^H V_l' g + sigma^2) - r_l, with r_l the tangent of log2(interference + noise).

    A lower bound of the downlink rate of user l, tight at the anchor.
    """
    a, slope, anchor_interference = _dl_linearization(l, anchor_blocks, scenario)
    total, interference = _dl_gains(l, V_blocks, scenario)
    r = a + slope * (interference - anchor_interference)
    return float(np.log2(total + scenario.noise_dl[l]) - r)


def _log_minorant(builder: ConicBuilder, name: str, z: AffineExpr, z0: float,
                  family: str = "objective") -> AffineExpr:
    """Concave stand-in for log2(z) near z0: log2(z0) + log2(e) * eta, (1 - eta) z >= z0."""
    (eta,) = builder.free(1, name)
    eta_var = AffineExpr.var(eta)
    builder.add_rotated_soc((1.0 - eta_var) * 0.5, z, [np.sqrt(z0)], family)
    return eta_var * LOG2E + float(np.log2(z0))


def build_rate_surrogate(spec: RateMaxSpec, anchor: RateScaState,
                         disabled: Optional[Set[str]] = None, restoration: bool = False) -> ConicProgram:
    """Convex surrogate of the sum-rate problem around `anchor` (maximization).

    With `restoration` the radar constraint carries a slack and the program
    minimizes it instead; the uplink cones always admit zero power.
    """
    sc = spec.scenario
    n_tx, K, L = sc.geometry.n_tx, sc.n_ul, sc.n_dl
    b = ConicBuilder("rate-restoration" if restoration else "rate-surrogate", disabled)
    blocks = [b.hermitian_psd(n_tx, f"V_{l}") for l in range(L + 1)]
    p = b.nonneg(K, "p")
    u = b.nonneg(K, "u")
    x = b.nonneg(K, "x")

    b.add_le(affine_sum([V.trace() for V in blocks]) - sc.p_max_bs, "power")
    for k in range(K):
        b.add_le(AffineExpr.var(p[k]) - sc.p_max_ul[k], "power")

    add_radar_subset(b, blocks, p, sc, anchor, spec.tau_rad, restoration)

    objective: List[AffineExpr] = []
    x0 = np.maximum(anchor.x_aux, X_FLOOR)
    for k in range(K):
        family = f"uplink-{k}"
        f_k = uplink_bound_expr(k, blocks, p, sc, anchor)
        b.add_rotated_soc(AffineExpr.var(p[k]) * 0.5, f_k, [AffineExpr.var(x[k])], family)
        b.add_le(AffineExpr.var(u[k]) - (AffineExpr.var(x[k], 2.0 * x0[k]) - x0[k] ** 2), family)
        objective.append(_log_minorant(b, f"eta_{k}", 1.0 + AffineExpr.var(u[k]), 1.0 + anchor.u_aux[k]))

    for l, g in enumerate(sc.downlink_channels):
        a, slope, anchor_interference = _dl_linearization(l, anchor.V_blocks, sc)
        received = affine_sum([V.quad(g) for V in blocks]) + sc.noise_dl[l]
        interference = affine_sum([V.quad(g) for i, V in enumerate(blocks) if i != l + 1])
        total0, _ = _dl_gains(l, anchor.V_blocks, sc)
        objective.append(_log_minorant(b, f"zeta_{l}", received, total0 + sc.noise_dl[l]))
        objective.append(-(interference - anchor_interference) * slope - a)

    if restoration:
        minimize_slack(b, affine_sum([V.trace() for V in blocks] + [AffineExpr.linear(p, np.ones(K))]))
    else:
        b.maximize(affine_sum(objective))
    return b.build()


def with_rate_aux(state: ScaState, scenario: Scenario) -> RateScaState:
    """Attach x_k = sqrt(p_k f_k / 2) and u_k = x_k^2, tight at the state itself."""
    rate_state = RateScaState(state.V_blocks, state.ul_powers)
    x0 = np.zeros(scenario.n_ul)
    for k, h in enumerate(scenario.uplink_channels):
        f_k = uplink_taylor_bound(k, phi_matrix(k, rate_state, scenario), h).anchor_value
        x0[k] = max(np.sqrt(state.ul_powers[k] * f_k / 2.0), X_FLOOR)
    rate_state.x_aux, rate_state.u_aux = x0, x0 ** 2
    return rate_state


def initial_rate_state(spec: RateMaxSpec, init: Optional[TxDesign] = None) -> RateScaState:
    """Equal power split: V_0 = P_max/(2 N_t) I, MRT beams sharing P_max/2, p_k = P_k/2."""
    sc = spec.scenario
    n_tx, L = sc.geometry.n_tx, sc.n_dl
    if init is not None:
        blocks = [np.array(init.radar_cov)] + [np.outer(v, v.conj()) for v in init.dl_beams]
        powers = np.array(init.ul_powers, dtype=float)
    else:
        blocks = [sc.p_max_bs / (2.0 * n_tx) * np.eye(n_tx, dtype=complex)]
        for g in sc.downlink_channels:
            blocks.append(sc.p_max_bs / (2.0 * L) * np.outer(g, g.conj()) / float(np.vdot(g, g).real))
        powers = sc.p_max_ul / 2.0
    return with_rate_aux(ScaState(blocks, powers), sc)


def restore_rate_anchor(spec: RateMaxSpec, anchor: RateScaState, options: ScaOptions,
                        disabled: Optional[Set[str]] = None) -> Restoration:
    """Move `anchor` to a point meeting the radar constraint within the budgets.

    Raises:
        InfeasibleError: No such point; `family` is "radar", "power" or "unknown"
    """
    disabled = set(disabled or ())
    sc = spec.scenario
    families = ["radar", "power"] if "radar" not in disabled else ["power"]

    def advance(program: ConicProgram, x: np.ndarray) -> RateScaState:
        blocks = [program.hermitian[f"V_{l}"].value(x) for l in range(sc.n_dl + 1)]
        return with_rate_aux(ScaState(blocks, np.clip(program.group("p", x), 0.0, sc.p_max_ul)), sc)

    return restore_or_diagnose(
        lambda off: lambda a: build_rate_surrogate(spec, a, disabled | off, restoration=True),
        advance,
        anchor,
        families,
        options,
    )


def _rate_value(state: RateScaState, scenario: Scenario) -> float:
    """sum log2(1 + u_k) + sum of relaxed downlink rates."""
    dl = relaxed_sinrs(state.V_blocks, state.ul_powers, scenario)["downlink"]
    return float(np.sum(np.log2(1.0 + state.u_aux)) + np.sum(np.log2(1.0 + dl)))


def sca_rate_max(spec: RateMaxSpec, options: Optional[ScaOptions] = None,
                 disabled: Optional[Set[str]] = None) -> RateMaxResult:
    """Run the rate SCA loop, then rank-one extraction and optimal receivers.

    Raises:
        InfeasibleError: Restoration found no point meeting the radar constraint within the budgets
        SolverStallError: A surrogate failed after the loop started; carries the last iterate
        IterationLimitError: No convergence within `max_iters`; carries the best result
    """
    opts = options or ScaOptions()
    disabled = set(disabled or ())
    unit = opts.power_unit
    nspec = spec.normalized(unit)
    sc = nspec.scenario
    L = sc.n_dl
    init = opts.init.scaled(1.0 / unit) if opts.init is not None else None
    tau_rad = None if "radar" in disabled else spec.tau_rad

    anchor = initial_rate_state(nspec, init)
    state = replace(anchor, V_blocks=[V.copy() for V in anchor.V_blocks])
    converged = False
    restored = False
    while state.iteration < opts.max_iters:
        program = build_rate_surrogate(nspec, anchor, disabled)
        solution = solve(program, opts.solver)

        if solution.status != SolveStatus.OPTIMAL:
            if state.iteration == 0 and not restored:
                logger.info(f"First rate surrogate {solution.status.value}; restoring feasibility")
                restoration = restore_rate_anchor(nspec, anchor, opts, disabled)
                anchor, restored = restoration.anchor, True
                state.restoration_steps = restoration.steps
                continue
            logger.warning(f"Rate surrogate {solution.status.value} at iteration {state.iteration + 1}")
            state.kkt_proxy["stopped_early"] = 1.0
            result = _finalize(spec, state, unit) if state.iteration else None
            raise SolverStallError(state.iteration, solution.status.value, result)

        xv = solution.primal
        state.V_blocks = [program.hermitian[f"V_{l}"].value(xv) for l in range(L + 1)]
        state.ul_powers = np.clip(program.group("p", xv), 0.0, sc.p_max_ul)
        state.u_aux = np.maximum(program.group("u", xv), 0.0)
        state.x_aux = np.maximum(program.group("x", xv), 0.0)
        state.iteration += 1
        rate = _rate_value(state, sc)
        state.rate_trace.append(rate)
        state.objective_trace.append(rate)
        state.kkt_proxy = {
            "primal_residual": solution.primal_residual,
            "cone_violation": solution.cone_violation,
            "duality_gap": solution.duality_gap,
        }
        sinrs = relaxed_sinrs(state.V_blocks, state.ul_powers, sc)
        state.trace.append({
            "iter": state.iteration,
            "sum_rate_bps_hz": rate,
            "radar_slack": slack_row(sinrs, tau_rad, None, None)["radar_slack"],
            "solve_ms": solution.stats.solve_time_ms,
            "method": "rate_sca",
        })
        logger.debug(f"Rate SCA iteration {state.iteration}: {rate:.6f} bit/s/Hz")

        if len(state.rate_trace) > 1 and relative_change(state.rate_trace[-2], state.rate_trace[-1]) < opts.epsilon:
            converged = True
            break
        anchor = replace(
            state,
            V_blocks=[V.copy() for V in state.V_blocks],
            ul_powers=state.ul_powers.copy(),
            u_aux=state.u_aux.copy(),
            x_aux=state.x_aux.copy(),
        )

    result = _finalize(spec, state, unit)
    if not converged:
        raise IterationLimitError(state.iteration, result)
    logger.info(f"Rate maximization converged in {state.iteration} iterations: {result.sum_rate:.4f} bit/s/Hz")
    return result


def _finalize(spec: RateMaxSpec, state: RateScaState, unit: float) -> RateMaxResult:
    nsc = normalize_scenario(spec.scenario, unit)
    beams, V0, powers = rank_one_extract(state.V_blocks, state.ul_powers, nsc, allow_silent_users=True)
    tx = TxDesign(beams, V0, powers).scaled(unit)
    report = evaluate_design(tx, spec.scenario)
    return RateMaxResult(state.scaled(unit), tx, report.rx, report, report.sum_rate())
