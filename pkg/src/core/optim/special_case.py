"""Alternating optimization for the sensing-plus-uplink special case (no DL users).

With receivers fixed, the power problem becomes an SOCP in the sensing
beamformer v_0 and the square roots q_k of the uplink powers. Receivers and
transmit parameters are updated in turn until the power settles.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from src.core.beamforming.design import RxDesign, SinrReport, TxDesign, project_psd
from src.core.beamforming.sinr import evaluate_design, optimal_receivers
from src.core.channel.scenario import Scenario, effective_matrix, interference_channels, normalize_scenario
from src.core.conic.program import AffineExpr, ConicBuilder, ConicProgram, affine_sum
from src.core.conic.solver import SolveStatus, solve
from src.core.exceptions import IterationLimitError, SolverStallError
from src.core.optim.common import ScaOptions, relative_change, slack_row
from src.core.optim.power_min import PowerMinSpec, ScaState, restore_power_anchor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TildeConstants:
    """Receiver-dependent coefficients of the fixed-receiver power problem.

    c[k, k'] is |w_k^H h_k'|^2 with a zero diagonal.
    """
    a: np.ndarray   # |w_k^H h_k|^2
    b: np.ndarray   # rows C^H w_k
    c: np.ndarray   # K x K
    d: np.ndarray   # sigma^2 ||w_k||^2
    e: np.ndarray   # |beta_0| A(theta_0)^H u
    f: np.ndarray   # B^H u
    g: np.ndarray   # |u^H h_k|^2
    h: float        # sigma^2 ||u||^2

    def __post_init__(self):
        for name in ("a", "c", "d", "g"):
            if np.any(np.asarray(getattr(self, name)) < 0):
                raise ValueError(f"tilde constant {name} must be nonnegative")
        if self.h < 0:
            raise ValueError("tilde constant h must be nonnegative")


@dataclass
class AoState:
    """Current sensing covariance, powers and receivers of the AO loop."""
    V0: np.ndarray
    ul_powers: np.ndarray
    rx: Optional[RxDesign] = None
    v0: Optional[np.ndarray] = None
    iteration: int = 0
    objective_trace: List[float] = field(default_factory=list)
    trace: List[Dict[str, float]] = field(default_factory=list)
    kkt_proxy: Dict[str, float] = field(default_factory=dict)
    restoration_steps: int = 0


class SpecialCaseResult(NamedTuple):
    state: AoState
    tx: TxDesign
    rx: RxDesign
    report: SinrReport


def compute_tilde_constants(rx: RxDesign, scenario: Scenario) -> TildeConstants:
    """Evaluate the quadratic forms that enter the SOCP for fixed receivers."""
    B, C = interference_channels(scenario)
    A0 = effective_matrix(scenario.target, scenario.geometry)
    H = scenario.uplink_channels
    u, W = rx.radar_rx, rx.ul_rx
    cross = np.abs(W.conj() @ H.T) ** 2      # [k, k'] = |w_k^H h_k'|^2
    a = np.diag(cross).copy()
    c = cross - np.diag(a)
    return TildeConstants(
        a=a,
        b=W @ C.conj() if W.size else np.zeros((0, scenario.geometry.n_tx), dtype=complex),
        c=c,
        d=scenario.noise_rx * np.sum(np.abs(W) ** 2, axis=1),
        e=np.sqrt(scenario.target.power_gain) * (A0.conj().T @ u),
        f=B.conj().T @ u,
        g=np.abs(H.conj() @ u) ** 2,
        h=scenario.noise_rx * float(np.vdot(u, u).real),
    )


def _complex_form(c: np.ndarray, re_ids: np.ndarray, im_ids: np.ndarray) -> Tuple[AffineExpr, AffineExpr]:
    """Real and imaginary parts of c^H v with v = v_re + j v_im."""
    re = AffineExpr.linear(np.concatenate([re_ids, im_ids]), np.concatenate([c.real, c.imag]))
    im = AffineExpr.linear(np.concatenate([re_ids, im_ids]), np.concatenate([-c.imag, c.real]))
    return re, im


def build_special_socp(constants: TildeConstants, tau_rad: float, tau_ul: np.ndarray,
                       disabled: Optional[set] = None) -> ConicProgram:
    """minimize t_0 s.t. the radar cone, one cone per uplink user and [t_0; v_0; q] in SOC."""
    n_tx = constants.e.size
    K = constants.a.size
    tau_ul = np.atleast_1d(np.asarray(tau_ul, dtype=float))
    bld = ConicBuilder("special-socp", disabled)
    v_re = bld.free(n_tx, "v_re")
    v_im = bld.free(n_tx, "v_im")
    (t0,) = bld.free(1, "t0")
    q = bld.nonneg(K, "q")
    q_vars = [AffineExpr.var(i) for i in q]

    if bld.enabled("radar"):
        e_re, e_im = _complex_form(constants.e, v_re, v_im)
        f_re, f_im = _complex_form(constants.f, v_re, v_im)
        root = np.sqrt(tau_rad)
        bld.add_eq(e_im, "radar")  # phase of e^H v_0 pinned to the real axis
        bld.add_soc(
            [e_re, f_re * root, f_im * root]
            + [q_vars[k] * (root * np.sqrt(constants.g[k])) for k in range(K)]
            + [root * np.sqrt(constants.h)],
            "radar",
        )

    for k in range(K):
        b_re, b_im = _complex_form(constants.b[k], v_re, v_im)
        root = np.sqrt(tau_ul[k])
        others = [q_vars[j] * (root * np.sqrt(constants.c[k, j])) for j in range(K) if j != k]
        bld.add_soc(
            [q_vars[k] * np.sqrt(constants.a[k]), b_re * root, b_im * root]
            + others + [root * np.sqrt(constants.d[k])],
            f"uplink-{k}",
        )

    bld.add_soc(
        [AffineExpr.var(t0)] + [AffineExpr.var(i) for i in np.concatenate([v_re, v_im])] + q_vars
    )
    bld.minimize(AffineExpr.var(t0))
    return bld.build()


def build_special_sdp(constants: TildeConstants, tau_rad: float, tau_ul: np.ndarray) -> ConicProgram:
    """The same fixed-receiver problem with a PSD sensing covariance instead of v_0 v_0^H."""
    n_tx = constants.e.size
    K = constants.a.size
    tau_ul = np.atleast_1d(np.asarray(tau_ul, dtype=float))
    bld = ConicBuilder("special-sdp")
    V0 = bld.hermitian_psd(n_tx, "V_0")
    p = bld.nonneg(K, "p")
    bld.add_ge(
        affine_sum([
            V0.quad(constants.e) / tau_rad,
            -V0.quad(constants.f),
            -AffineExpr.linear(p, constants.g),
            -constants.h,
        ]),
        "radar",
    )
    for k in range(K):
        bld.add_ge(
            affine_sum([
                AffineExpr.var(p[k], constants.a[k] / tau_ul[k]),
                -V0.quad(constants.b[k]),
                -AffineExpr.linear(p, constants.c[k]),
                -constants.d[k],
            ]),
            f"uplink-{k}",
        )
    bld.minimize(V0.trace() + AffineExpr.linear(p, np.ones(K)))
    return bld.build()


def _unit_receivers(rx: RxDesign) -> RxDesign:
    """Receivers rescaled to unit norm (all SINRs are scale invariant)."""
    W = rx.ul_rx / np.linalg.norm(rx.ul_rx, axis=1, keepdims=True) if rx.ul_rx.size else rx.ul_rx
    return RxDesign(rx.radar_rx / np.linalg.norm(rx.radar_rx), W)


def ao_special_case(scenario: Scenario, tau_rad: float, tau_ul, options: Optional[ScaOptions] = None) -> SpecialCaseResult:
    """Alternate closed-form receivers and the fixed-receiver SOCP.

    Raises:
        ValueError: Scenario has downlink users
        InfeasibleError: No feasible start found by restoration
        SolverStallError: SOCP failed after the loop started; carries the last iterate
        IterationLimitError: No convergence within `max_iters`; carries the best result
    """
    if scenario.n_dl:
        raise ValueError("the special case has no downlink users; use Scenario.without_downlink()")
    opts = options or ScaOptions()
    unit = opts.power_unit
    tau_ul = np.atleast_1d(np.asarray(tau_ul, dtype=float)) if scenario.n_ul else np.zeros(0)
    if not tau_rad > 0 or np.any(tau_ul <= 0) or tau_ul.size != scenario.n_ul:
        raise ValueError("positive thresholds are required for the radar and every uplink user")

    sc = normalize_scenario(scenario, unit)
    n_tx = sc.geometry.n_tx
    empty_beams = np.zeros((0, n_tx), dtype=complex)
    if opts.init is not None:
        start = opts.init.scaled(1.0 / unit)
        V0, powers = np.array(start.radar_cov), np.array(start.ul_powers, dtype=float)
    else:
        V0 = sc.p_max_bs / (2.0 * n_tx) * np.eye(n_tx, dtype=complex)
        powers = sc.p_max_ul / 2.0
    state = AoState(V0, powers)

    converged = False
    restored = False
    while state.iteration < opts.max_iters:
        tx = TxDesign(empty_beams, state.V0, state.ul_powers)
        rx = _unit_receivers(optimal_receivers(tx, sc))
        constants = compute_tilde_constants(rx, sc)
        program = build_special_socp(constants, tau_rad, tau_ul)
        solution = solve(program, opts.solver)

        if solution.status != SolveStatus.OPTIMAL:
            if state.iteration == 0 and not restored:
                # MVDR receivers of a feasible relaxed design admit a feasible SOCP
                logger.info(f"Initial SOCP {solution.status.value}; restoring feasibility")
                restoration = restore_power_anchor(
                    PowerMinSpec(sc, tau_rad, tau_ul, np.zeros(0)), ScaState([state.V0], state.ul_powers), opts
                )
                state.V0 = project_psd(restoration.anchor.V_blocks[0])
                state.ul_powers = restoration.anchor.ul_powers
                state.restoration_steps, restored = restoration.steps, True
                continue
            logger.warning(f"SOCP {solution.status.value} at iteration {state.iteration + 1}")
            state.kkt_proxy["stopped_early"] = 1.0
            result = _finalize(scenario, state, unit) if state.iteration else None
            raise SolverStallError(state.iteration, solution.status.value, result)

        x = solution.primal
        v0 = program.group("v_re", x) + 1j * program.group("v_im", x)
        q = np.maximum(program.group("q", x), 0.0)
        state.v0, state.V0, state.ul_powers = v0, np.outer(v0, v0.conj()), q ** 2
        state.rx = rx
        state.iteration += 1
        objective = float(np.vdot(v0, v0).real + np.sum(q ** 2)) * unit
        state.objective_trace.append(objective)
        state.kkt_proxy = {
            "primal_residual": solution.primal_residual,
            "cone_violation": solution.cone_violation,
            "duality_gap": solution.duality_gap,
        }
        report = evaluate_design(TxDesign(empty_beams, state.V0, state.ul_powers), sc, rx)
        row = {"iter": state.iteration, "objective_w": objective}
        row.update(slack_row(
            {"radar": np.array(report.radar), "uplink": report.uplink, "downlink": report.downlink},
            tau_rad, tau_ul, None,
        ))
        row.update({"solve_ms": solution.stats.solve_time_ms, "method": "ao"})
        state.trace.append(row)
        logger.debug(f"AO iteration {state.iteration}: power {objective:.6e} W")

        if len(state.objective_trace) > 1 and relative_change(
            state.objective_trace[-2], state.objective_trace[-1]
        ) < opts.epsilon:
            converged = True
            break

    result = _finalize(scenario, state, unit)
    if not converged:
        raise IterationLimitError(state.iteration, result)
    logger.info(f"AO converged in {state.iteration} iterations: {result.tx.total_power:.6e} W")
    return result


def _finalize(scenario: Scenario, state: AoState, unit: float) -> SpecialCaseResult:
    """Rescale the last SOCP iterate to watts and evaluate it on the original scenario."""
    empty_beams = np.zeros((0, scenario.geometry.n_tx), dtype=complex)
    tx = TxDesign(empty_beams, state.V0 * unit, state.ul_powers * unit)
    report = evaluate_design(tx, scenario)
    final = AoState(
        V0=tx.radar_cov, ul_powers=np.array(tx.ul_powers), rx=report.rx,
        v0=None if state.v0 is None else state.v0 * np.sqrt(unit),
        iteration=state.iteration, objective_trace=state.objective_trace,
        trace=state.trace, kkt_proxy=state.kkt_proxy, restoration_steps=state.restoration_steps,
    )
    return SpecialCaseResult(final, tx, report.rx, report)
