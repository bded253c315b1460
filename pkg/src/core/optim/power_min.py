"""Total transmit power minimization by successive convex approximation.

Each iteration solves a rank-relaxed SDP in which the radar and uplink SINR
constraints are replaced by convex inner approximations built from
first-order expansions of a^H X^-1 a at the previous iterate. The loop stops
on a small relative change of the objective, then the relaxed covariances are
turned into beams without loss of optimality.

All programs are built on the normalized scenario (unit noise, powers in
`ScaOptions.power_unit`); results are returned in watts.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, NamedTuple, Optional, Set

import numpy as np

from src.core.beamforming.design import RxDesign, SinrReport, TxDesign
from src.core.beamforming.sinr import (
    evaluate_design,
    hpd_solve,
    radar_interference,
    uplink_interference,
)
from src.core.channel.geometry import steering_rx, steering_tx
from src.core.channel.scenario import Scenario, interference_channels, normalize_scenario
from src.core.conic.program import (
    AffineExpr,
    ConicBuilder,
    ConicProgram,
    HermitianVar,
    affine_sum,
    hermitian_functional,
)
from src.core.conic.solver import SolveStatus, solve
from src.core.config import settings
from src.core.exceptions import IterationLimitError, SolverStallError
from src.core.optim.common import (
    Restoration,
    ScaOptions,
    add_slack,
    constraint_families,
    minimize_slack,
    q_bar,
    relative_change,
    relaxed_sinrs,
    restore_or_diagnose,
    slack_row,
)
from src.core.optim.rank_one import rank_one_extract

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PowerMinSpec:
    """Scenario plus linear SINR thresholds of problem instance."""
    scenario: Scenario
    tau_rad: float
    tau_ul: np.ndarray
    tau_dl: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tau_ul", np.atleast_1d(np.asarray(self.tau_ul, dtype=float)))
        object.__setattr__(self, "tau_dl", np.atleast_1d(np.asarray(self.tau_dl, dtype=float)))
        if not self.tau_rad > 0 or np.any(self.tau_ul <= 0) or np.any(self.tau_dl <= 0):
            raise ValueError("all SINR thresholds must be positive")
        if self.tau_ul.size != self.scenario.n_ul or self.tau_dl.size != self.scenario.n_dl:
            raise ValueError("one threshold per uplink and downlink user is required")

    @classmethod
    def uniform(cls, scenario: Scenario, tau_rad: float, tau_ul: float, tau_dl: float) -> "PowerMinSpec":
        return cls(scenario, tau_rad, np.full(scenario.n_ul, tau_ul), np.full(scenario.n_dl, tau_dl))

    def normalized(self, power_unit: float) -> "PowerMinSpec":
        return replace(self, scenario=normalize_scenario(self.scenario, power_unit))


@dataclass
class ScaState:
    """Relaxed iterate: blocks [V_0, V_1, ..., V_L] and uplink powers."""
    V_blocks: List[np.ndarray]
    ul_powers: np.ndarray
    iteration: int = 0
    objective_trace: List[float] = field(default_factory=list)
    trace: List[Dict[str, float]] = field(default_factory=list)
    kkt_proxy: Dict[str, float] = field(default_factory=dict)
    restoration_steps: int = 0

    @property
    def Q_bar(self) -> np.ndarray:
        return q_bar(self.V_blocks)

    @property
    def power(self) -> float:
        return float(sum(np.trace(V).real for V in self.V_blocks) + np.sum(self.ul_powers))

    def scaled(self, factor: float) -> "ScaState":
        return replace(self, V_blocks=[V * factor for V in self.V_blocks], ul_powers=self.ul_powers * factor)


class PowerMinResult(NamedTuple):
    state: ScaState
    tx: TxDesign
    rx: RxDesign
    report: SinrReport


def psi_matrix(state: ScaState, scenario: Scenario) -> np.ndarray:
    """Radar interference-plus-noise matrix of a relaxed iterate."""
    return radar_interference(state.Q_bar, state.ul_powers, scenario)


def phi_matrix(k: int, state: ScaState, scenario: Scenario) -> np.ndarray:
    """Interference-plus-noise matrix seen by uplink user k."""
    return uplink_interference(k, state.Q_bar, state.ul_powers, scenario)


@dataclass(frozen=True)
class AffineBound:
    """constant - c^H Qbar c + w . p, affine in the covariance blocks and powers."""
    constant: float
    cov_direction: np.ndarray
    power_weights: np.ndarray

    def value(self, Q: np.ndarray, ul_powers: np.ndarray) -> float:
        c = self.cov_direction
        return float(self.constant - np.real(np.vdot(c, Q @ c)) + self.power_weights @ ul_powers)

    def expr(self, blocks: List[HermitianVar], p_ids: np.ndarray) -> AffineExpr:
        c = self.cov_direction
        cov = hermitian_functional(blocks, -np.outer(c, c.conj()))
        return affine_sum([cov, AffineExpr.linear(p_ids, self.power_weights), self.constant])


@dataclass(frozen=True)
class TaylorBound:
    """f(X, X0) = 2 Re(a^H z) - z^H X z, z = X0^-1 a.

    First-order expansion of the convex map X -> a^H X^-1 a at X0, hence a
    global under-estimator that is tight at X0.
    """
    steer: np.ndarray
    z: np.ndarray

    @property
    def anchor_value(self) -> float:
        return float(np.real(np.vdot(self.steer, self.z)))

    def __call__(self, matrix: np.ndarray) -> float:
        return 2.0 * self.anchor_value - float(np.real(np.vdot(self.z, matrix @ self.z)))

    def affine(self, channel: np.ndarray, ul_channels: np.ndarray, noise: float,
               skip: Optional[int] = None) -> AffineBound:
        """Express the bound through Qbar and p for X = sum p_k h_k h_k^H + M Qbar M^H + noise I."""
        weights = -np.abs(ul_channels.conj() @ self.z) ** 2
        if skip is not None:
            weights[skip] = 0.0
        constant = 2.0 * self.anchor_value - noise * float(np.real(np.vdot(self.z, self.z)))
        return AffineBound(constant, channel.conj().T @ self.z, weights)


def radar_taylor_bound(psi_anchor: np.ndarray, a_r: np.ndarray) -> TaylorBound:
    """Lower bound of a_r^H Psi^-1 a_r expanded at psi_anchor."""
    return TaylorBound(a_r, hpd_solve(psi_anchor, a_r))


def uplink_taylor_bound(k: int, phi_anchor: np.ndarray, h_k: np.ndarray) -> TaylorBound:
    """Lower bound of h_k^H Phi_k^-1 h_k expanded at phi_anchor."""
    return TaylorBound(h_k, hpd_solve(phi_anchor, h_k))


def add_radar_subset(builder: ConicBuilder, blocks: List[HermitianVar], p_ids: np.ndarray,
                     scenario: Scenario, anchor: ScaState, tau_rad: float,
                     restoration: bool = False) -> None:
    """f(Psi, Psi0) >= s and s (a_t^H Qbar a_t) >= tau / |beta_0|^2, plus a_t^H Qbar a_t >= delta.

    With `restoration` the first inequality gets a nonnegative slack.
    """
    if not builder.enabled("radar"):
        return
    a_t = steering_tx(scenario.geometry, scenario.target.angle_deg)
    a_r = steering_rx(scenario.geometry, scenario.target.angle_deg)
    B, _ = interference_channels(scenario)
    bound = radar_taylor_bound(psi_matrix(anchor, scenario), a_r)
    f_rad = bound.affine(B, scenario.uplink_channels, scenario.noise_rx).expr(blocks, p_ids)
    gain = hermitian_functional(blocks, np.outer(a_t, a_t.conj()))
    (s,) = builder.free(1, "s")
    s_var = AffineExpr.var(s)
    margin = f_rad - s_var
    builder.add_ge(add_slack(builder, margin, "radar") if restoration else margin, "radar")
    builder.add_rotated_soc(s_var, gain, [np.sqrt(2.0 * tau_rad / scenario.target.power_gain)], "radar")
    builder.add_ge(gain - settings.RADAR_GAIN_FLOOR, "radar")


def uplink_bound_expr(k: int, builder_blocks: List[HermitianVar], p_ids: np.ndarray,
                      scenario: Scenario, anchor: ScaState) -> AffineExpr:
    """f(Phi_k, Phi_k0) as an affine expression."""
    _, C = interference_channels(scenario)
    h = scenario.uplink_channels[k]
    bound = uplink_taylor_bound(k, phi_matrix(k, anchor, scenario), h)
    return bound.affine(C, scenario.uplink_channels, scenario.noise_rx, skip=k).expr(builder_blocks, p_ids)


def build_power_surrogate(spec: PowerMinSpec, anchor: ScaState,
                          disabled: Optional[Set[str]] = None, restoration: bool = False) -> ConicProgram:
    """Convex surrogate of the power minimization problem around `anchor`.

    With `restoration` every SINR constraint carries a nonnegative slack and
    the objective becomes the total slack (plus a small power term), so the
    program is feasible for any anchor.
    """
    sc = spec.scenario
    n_tx, K, L = sc.geometry.n_tx, sc.n_ul, sc.n_dl
    b = ConicBuilder("power-restoration" if restoration else "power-surrogate", disabled)
    blocks = [b.hermitian_psd(n_tx, f"V_{l}") for l in range(L + 1)]
    p = b.nonneg(K, "p")

    def relax(expr: AffineExpr, family: str) -> AffineExpr:
        return add_slack(b, expr, family) if restoration else expr

    add_radar_subset(b, blocks, p, sc, anchor, spec.tau_rad, restoration)

    t_ids = b.free(K, "t")
    for k in range(K):
        family = f"uplink-{k}"
        t_k = AffineExpr.var(t_ids[k])
        b.add_ge(relax(uplink_bound_expr(k, blocks, p, sc, anchor) - t_k, family), family)
        b.add_rotated_soc(t_k, AffineExpr.var(p[k]), [np.sqrt(2.0 * spec.tau_ul[k])], family)

    for l, g in enumerate(sc.downlink_channels):
        family = f"downlink-{l}"
        gg = np.outer(g, g.conj())
        own = blocks[l + 1].inner(gg) * (1.0 + 1.0 / spec.tau_dl[l])
        b.add_ge(relax(own - hermitian_functional(blocks, gg) - sc.noise_dl[l], family), family)

    power = affine_sum([V.trace() for V in blocks] + [AffineExpr.linear(p, np.ones(K))])
    if restoration:
        minimize_slack(b, power)
    else:
        b.minimize(power)
    return b.build()


def initial_power_state(spec: PowerMinSpec, init: Optional[TxDesign] = None) -> ScaState:
    """V_0 = P_max/(2 N_t) I, MRT beams meeting the DL thresholds alone, p_k = P_k/2."""
    sc = spec.scenario
    if init is not None:
        blocks = [np.array(init.radar_cov)] + [np.outer(v, v.conj()) for v in init.dl_beams]
        return ScaState(blocks, np.array(init.ul_powers, dtype=float))
    n_tx = sc.geometry.n_tx
    blocks = [sc.p_max_bs / (2.0 * n_tx) * np.eye(n_tx, dtype=complex)]
    for l, g in enumerate(sc.downlink_channels):
        gain = float(np.vdot(g, g).real)
        power = spec.tau_dl[l] * sc.noise_dl[l] / gain
        blocks.append(power * np.outer(g, g.conj()) / gain)
    return ScaState(blocks, sc.p_max_ul / 2.0)


def _decode(program: ConicProgram, x: np.ndarray, L: int) -> tuple:
    blocks = [program.hermitian[f"V_{l}"].value(x) for l in range(L + 1)]
    powers = np.maximum(program.group("p", x), 0.0)
    return blocks, powers


def restore_power_anchor(spec: PowerMinSpec, anchor: ScaState, options: ScaOptions,
                         disabled: Optional[Set[str]] = None) -> Restoration:
    """Move `anchor` to a point that meets every enabled SINR constraint.

    `spec` must already be normalized.

    Raises:
        InfeasibleError: No feasible point found; `family` names the culprit
    """
    disabled = set(disabled or ())
    sc = spec.scenario
    families = constraint_families(sc.n_ul, sc.n_dl, radar="radar" not in disabled)
    return restore_or_diagnose(
        lambda off: lambda a: build_power_surrogate(spec, a, disabled | off, restoration=True),
        lambda program, x: ScaState(*_decode(program, x, sc.n_dl)),
        anchor,
        families,
        options,
    )


def sca_power_min(spec: PowerMinSpec, options: Optional[ScaOptions] = None,
                  disabled: Optional[Set[str]] = None) -> PowerMinResult:
    """Run the SCA loop, then rank-one extraction and optimal receivers.

    If the first surrogate is infeasible, a restoration phase moves the
    anchor to a feasible point before the loop starts over.

    Raises:
        InfeasibleError: Restoration found no feasible point
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
    anchor = initial_power_state(nspec, init)
    tau_rad = None if "radar" in disabled else spec.tau_rad

    state = ScaState([V.copy() for V in anchor.V_blocks], anchor.ul_powers.copy())
    converged = False
    restored = False
    while state.iteration < opts.max_iters:
        program = build_power_surrogate(nspec, anchor, disabled)
        solution = solve(program, opts.solver)

        if solution.status != SolveStatus.OPTIMAL:
            if state.iteration == 0 and not restored:
                logger.info(f"First surrogate {solution.status.value}; restoring feasibility")
                restoration = restore_power_anchor(nspec, anchor, opts, disabled)
                anchor, restored = restoration.anchor, True
                state.restoration_steps = restoration.steps
                continue
            logger.warning(f"Surrogate {solution.status.value} at iteration {state.iteration + 1}")
            state.kkt_proxy["stopped_early"] = 1.0
            result = _finalize(spec, state, unit) if state.iteration else None
            raise SolverStallError(state.iteration, solution.status.value, result)

        blocks, powers = _decode(program, solution.primal, L)
        state.V_blocks, state.ul_powers = blocks, powers
        state.iteration += 1
        objective = solution.objective_value * unit
        state.objective_trace.append(objective)
        state.kkt_proxy = {
            "primal_residual": solution.primal_residual,
            "cone_violation": solution.cone_violation,
            "duality_gap": solution.duality_gap,
        }
        row = {"iter": state.iteration, "objective_w": objective}
        row.update(slack_row(relaxed_sinrs(blocks, powers, sc), tau_rad, nspec.tau_ul, nspec.tau_dl))
        row.update({"solve_ms": solution.stats.solve_time_ms, "method": "sca"})
        state.trace.append(row)
        logger.debug(f"SCA iteration {state.iteration}: power {objective:.6e} W")

        if len(state.objective_trace) > 1 and relative_change(
            state.objective_trace[-2], state.objective_trace[-1]
        ) < opts.epsilon:
            converged = True
            break
        anchor = ScaState([V.copy() for V in blocks], powers.copy())

    result = _finalize(spec, state, unit)
    if not converged:
        raise IterationLimitError(state.iteration, result)
    logger.info(
        f"Power minimization converged in {state.iteration} iterations: {result.tx.total_power:.6e} W"
    )
    return result


def _finalize(spec: PowerMinSpec, state: ScaState, unit: float) -> PowerMinResult:
    """Rank-one extraction, rescaling to watts and receiver computation."""
    nsc = normalize_scenario(spec.scenario, unit)
    beams, V0, powers = rank_one_extract(state.V_blocks, state.ul_powers, nsc)
    tx = TxDesign(beams, V0, powers).scaled(unit)
    report = evaluate_design(tx, spec.scenario)
    final = state.scaled(unit)
    return PowerMinResult(final, tx, report.rx, report)
