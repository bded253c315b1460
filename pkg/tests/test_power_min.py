"""Tests for the power-minimization SCA loop and rank-one extraction."""

from dataclasses import replace

import numpy as np
import pytest

import src.core.optim.power_min as power_min_module
from src.core.beamforming.design import TxDesign
from src.core.beamforming.sinr import evaluate_design, uplink_interference
from src.core.channel.geometry import db_to_linear, steering_rx
from src.core.channel.scenario import interference_channels, normalize_scenario
from src.core.conic.program import ConeKind
from src.core.conic.solver import SolveStatus, solve
from src.core.exceptions import DegenerateDesignError, InfeasibleError, SolverStallError
from src.core.optim import (
    PowerMinSpec,
    ScaState,
    build_power_surrogate,
    comm_only_power_min,
    initial_power_state,
    rank_one_extract,
    restore_power_anchor,
    sca_power_min,
    uplink_taylor_bound,
)
from src.core.optim.common import ScaOptions, max_rank_ratio, q_bar, slack_values
from src.core.optim.power_min import phi_matrix, psi_matrix, radar_taylor_bound
from tests.conftest import random_psd

TAU_RAD = db_to_linear(6.0)
TAU_UL = db_to_linear(5.0)
TAU_DL = db_to_linear(8.0)


def test_taylor_bound_is_global_underestimator(rng, small_scenario):
    """f(X, X0) <= h^H X^-1 h everywhere with equality at X0."""
    n = small_scenario.geometry.n_rx
    h = small_scenario.uplink_channels[0] / np.linalg.norm(small_scenario.uplink_channels[0])
    X0 = random_psd(rng, n) + np.eye(n)
    bound = uplink_taylor_bound(0, X0, h)
    exact0 = float(np.real(np.vdot(h, np.linalg.solve(X0, h))))
    assert bound(X0) == pytest.approx(exact0, rel=1e-10)
    for _ in range(50):
        X = random_psd(rng, n, scale=rng.uniform(0.1, 10.0)) + 0.1 * np.eye(n)
        exact = float(np.real(np.vdot(h, np.linalg.solve(X, h))))
        assert bound(X) <= exact + 1e-10


def test_affine_bound_matches_matrix_bound(rng, small_scenario):
    """The affine form in (Qbar, p) reproduces the bound on Phi_k."""
    sc = small_scenario
    anchor = ScaState([random_psd(rng, 4, scale=1e-3) for _ in range(3)], np.array([1e-3, 2e-3]))
    phi0 = uplink_interference(1, anchor.Q_bar, anchor.ul_powers, sc)
    bound = uplink_taylor_bound(1, phi0, sc.uplink_channels[1])
    _, C = interference_channels(sc)
    affine = bound.affine(C, sc.uplink_channels, sc.noise_rx, skip=1)

    Q = random_psd(rng, 4, scale=1e-3)
    p = np.array([3e-3, 5e-4])
    phi = uplink_interference(1, Q, p, sc)
    assert affine.value(Q, p) == pytest.approx(bound(phi), rel=1e-8)


def test_surrogate_structure(small_scenario):
    """Radar subset, one cone pair per uplink user, one row per downlink user, L + 1 PSD blocks."""
    spec = PowerMinSpec.uniform(small_scenario, TAU_RAD, TAU_UL, TAU_DL).normalized(1e-3)
    program = build_power_surrogate(spec, initial_power_state(spec))
    assert program.count("rsoc", "radar") == 1
    assert program.count("ge", "radar") == 2
    assert program.count("rsoc", "uplink") == 2
    assert program.count("ge", "uplink") == 2
    assert program.count("ge", "downlink") == 2
    assert len(program.blocks_of(ConeKind.PSD_REAL)) == 3


def test_disabling_radar_removes_its_constraints(small_scenario):
    """The communication-only surrogate has no radar rows or cones."""
    spec = PowerMinSpec.uniform(small_scenario, TAU_RAD, TAU_UL, TAU_DL).normalized(1e-3)
    program = build_power_surrogate(spec, initial_power_state(spec), disabled={"radar"})
    assert program.count("rsoc", "radar") == 0
    assert program.count("ge", "radar") == 0


def test_spec_rejects_bad_thresholds(small_scenario):
    """Thresholds must be positive and sized per user."""
    with pytest.raises(ValueError):
        PowerMinSpec.uniform(small_scenario, 0.0, TAU_UL, TAU_DL)
    with pytest.raises(ValueError):
        PowerMinSpec(small_scenario, TAU_RAD, np.ones(3), np.ones(2))


def test_single_user_comm_only_closed_form(single_user_scenario, fast_options):
    """One DL user without radar: P* = tau sigma^2 / ||g||^2."""
    sc = single_user_scenario
    tau = db_to_linear(10.0)
    spec = PowerMinSpec(sc, 1.0, np.zeros(0), [tau])
    result = comm_only_power_min(spec, fast_options)
    g = sc.downlink_channels[0]
    expected = tau * sc.noise_dl[0] / float(np.vdot(g, g).real)
    assert result.tx.total_power == pytest.approx(expected, rel=5e-3)
    assert result.report.downlink[0] >= tau * (1 - 1e-4)


def test_sca_power_min_meets_constraints(small_scenario, fast_options):
    """Converged design meets every threshold and the power trace never increases."""
    spec = PowerMinSpec.uniform(small_scenario, TAU_RAD, TAU_UL, TAU_DL)
    result = sca_power_min(spec, fast_options)
    report = result.report
    assert report.meets(TAU_RAD, spec.tau_ul, spec.tau_dl, rtol=1e-4)
    trace = result.state.objective_trace
    assert all(b <= a * (1 + 1e-5) for a, b in zip(trace, trace[1:]))
    assert result.tx.total_power == pytest.approx(trace[-1], rel=1e-4)
    assert result.state.kkt_proxy["primal_residual"] < 1e-6
    assert [row["method"] for row in result.state.trace] == ["sca"] * result.state.iteration


def test_comm_only_needs_no_more_power(small_scenario, fast_options):
    """Dropping the sensing constraint cannot increase the minimum power."""
    spec = PowerMinSpec.uniform(small_scenario, TAU_RAD, TAU_UL, TAU_DL)
    fd = sca_power_min(spec, fast_options)
    comm = comm_only_power_min(spec, fast_options)
    assert comm.tx.total_power <= fd.tx.total_power * (1 + 1e-3)


def test_unreachable_radar_threshold_is_diagnosed(small_scenario, fast_options):
    """A radar threshold far beyond reach is reported against the radar family."""
    weak = small_scenario.with_target_gain(1e-30)
    spec = PowerMinSpec.uniform(weak, db_to_linear(60.0), TAU_UL, TAU_DL)
    with pytest.raises(InfeasibleError) as excinfo:
        sca_power_min(spec, fast_options)
    assert excinfo.value.family == "radar"


def test_rank_one_extract_is_lossless(rng, small_scenario):
    """Power, Qbar and every g^H V g survive the reconstruction; beams are rank one."""
    sc = small_scenario
    blocks = [random_psd(rng, 4, rank=2, scale=1e-3) for _ in range(sc.n_dl + 1)]
    powers = np.array([1e-3, 2e-3])
    beams, V0, p = rank_one_extract(blocks, powers, sc)

    rebuilt = [V0] + [np.outer(v, v.conj()) for v in beams]
    np.testing.assert_allclose(q_bar(rebuilt), q_bar(blocks), atol=1e-15)
    total = sum(np.trace(V).real for V in blocks)
    assert np.trace(V0).real + np.sum(np.abs(beams) ** 2) == pytest.approx(total, rel=1e-10)
    for l, g in enumerate(sc.downlink_channels):
        own = np.real(np.vdot(g, blocks[l + 1] @ g))
        assert abs(np.vdot(g, beams[l])) ** 2 == pytest.approx(own, rel=1e-10)
    assert np.linalg.eigvalsh(V0).min() > -1e-12
    assert max_rank_ratio(np.outer(v, v.conj()) for v in beams) < 1e-8
    np.testing.assert_array_equal(p, powers)


def test_rank_one_extract_degenerate_user(small_scenario):
    """A block orthogonal to its user's channel raises unless silent users are allowed."""
    sc = small_scenario
    g = sc.downlink_channels[0]
    e = np.ones(4, dtype=complex)
    null = e - g * np.vdot(g, e) / np.vdot(g, g)
    blocks = [np.eye(4) * 1e-3, np.outer(null, null.conj()), np.eye(4) * 1e-3]
    with pytest.raises(DegenerateDesignError):
        rank_one_extract(blocks, np.zeros(2), sc)
    beams, V0, _ = rank_one_extract(blocks, np.zeros(2), sc, allow_silent_users=True)
    assert not np.any(beams[0])
    assert np.trace(V0).real == pytest.approx(np.trace(sum(blocks)).real - np.sum(np.abs(beams[1]) ** 2))


def test_result_sinrs_match_evaluation(small_scenario, fast_options):
    """The returned report equals a fresh evaluation of the returned design."""
    spec = PowerMinSpec.uniform(small_scenario, TAU_RAD, TAU_UL, TAU_DL)
    result = sca_power_min(spec, fast_options)
    fresh = evaluate_design(result.tx, small_scenario)
    assert fresh.radar == pytest.approx(result.report.radar, rel=1e-9)
    np.testing.assert_allclose(fresh.uplink, result.report.uplink, rtol=1e-9)


def test_rank_one_extract_projects_indefinite_sensing_block(rng, single_user_scenario):
    """A near-zero sensing block with a round-off negative eigenvalue comes back PSD."""
    sc = single_user_scenario
    U, _ = np.linalg.qr(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
    V0_hat = (U * np.array([-1.288e-9, 1e-9, 2e-9, 4.15e-9])) @ U.conj().T
    v = (rng.standard_normal(4) + 1j * rng.standard_normal(4)) * 1e-4
    beams, V0, powers = rank_one_extract([V0_hat, np.outer(v, v.conj())], np.zeros(0), sc)

    assert np.linalg.eigvalsh(V0).min() >= -1e-20
    np.testing.assert_allclose(V0, V0.conj().T, atol=0)
    design = TxDesign(beams, V0, powers)
    assert np.trace(design.radar_cov).real == pytest.approx(7.15e-9, rel=1e-6)


def test_default_start_is_restored_to_feasibility(small_scenario, fast_options):
    """The reference start of this instance is infeasible; restoration still reaches the optimum."""
    spec = PowerMinSpec.uniform(small_scenario, TAU_RAD, TAU_UL, TAU_DL)
    nspec = spec.normalized(fast_options.power_unit)
    assert not solve(build_power_surrogate(nspec, initial_power_state(nspec))).ok

    result = sca_power_min(spec, fast_options)
    assert result.state.restoration_steps > 0
    assert result.report.meets(TAU_RAD, spec.tau_ul, spec.tau_dl, rtol=1e-4)


def test_restored_anchor_admits_a_feasible_surrogate(small_scenario, fast_options):
    """After restoration no slack is needed and the plain surrogate solves."""
    nspec = PowerMinSpec.uniform(small_scenario, TAU_RAD, TAU_UL, TAU_DL).normalized(fast_options.power_unit)
    restoration = restore_power_anchor(nspec, initial_power_state(nspec), fast_options)
    assert restoration.feasible
    assert sum(restoration.slacks.values()) <= 1e-7
    assert solve(build_power_surrogate(nspec, restoration.anchor)).ok


def test_restoration_surrogate_is_always_solvable(small_scenario):
    """With slacks the surrogate solves even at an unreachable threshold and reports the shortfall."""
    spec = PowerMinSpec.uniform(small_scenario, db_to_linear(40.0), TAU_UL, TAU_DL).normalized(1e-3)
    program = build_power_surrogate(spec, initial_power_state(spec), restoration=True)
    solution = solve(program)
    assert solution.ok
    slacks = slack_values(program, solution.primal)
    assert set(slacks) == {"radar", "uplink-0", "uplink-1", "downlink-0", "downlink-1"}
    assert all(value >= 0 for value in slacks.values())


def test_solver_failure_after_progress_is_reported(small_scenario, fast_options, monkeypatch):
    """A surrogate failing at iteration 3 raises with the two accepted iterates attached."""
    calls = {"n": 0}

    def flaky(program, settings=None):
        solution = solve(program, settings)
        if solution.ok:
            calls["n"] += 1
            if calls["n"] == 3:
                return replace(solution, status=SolveStatus.NUMERICAL_LIMIT)
        return solution

    monkeypatch.setattr(power_min_module, "solve", flaky)
    spec = PowerMinSpec.uniform(small_scenario, TAU_RAD, TAU_UL, TAU_DL)
    opts = ScaOptions(epsilon=1e-12, max_iters=10)
    with pytest.raises(SolverStallError) as excinfo:
        sca_power_min(spec, opts)
    assert excinfo.value.iterations == 2
    assert excinfo.value.result.state.iteration == 2
    assert excinfo.value.result.state.kkt_proxy["stopped_early"] == 1.0


def test_radar_and_uplink_bounds_dominated_and_tight_on_scenario_states(rng, small_scenario):
    """On interference matrices built from random designs, both bounds stay below the exact forms."""
    sc = normalize_scenario(small_scenario, 1e-3)
    a_r = steering_rx(sc.geometry, sc.target.angle_deg)

    def state(scale):
        return ScaState([random_psd(rng, 4, scale=scale) for _ in range(3)], rng.uniform(0.0, 10.0 * scale, 2))

    def exact(X, a):
        return float(np.real(np.vdot(a, np.linalg.solve(X, a))))

    for _ in range(20):
        anchor = state(rng.uniform(0.1, 10.0))
        psi0 = psi_matrix(anchor, sc)
        radar = radar_taylor_bound(psi0, a_r)
        assert radar(psi0) == pytest.approx(exact(psi0, a_r), rel=1e-9)
        phi0 = phi_matrix(0, anchor, sc)
        uplink = uplink_taylor_bound(0, phi0, sc.uplink_channels[0])
        assert uplink(phi0) == pytest.approx(exact(phi0, sc.uplink_channels[0]), rel=1e-9)
        for _ in range(10):
            other = state(rng.uniform(0.01, 100.0))
            psi, phi = psi_matrix(other, sc), phi_matrix(0, other, sc)
            assert radar(psi) <= exact(psi, a_r) * (1 + 1e-10)
            assert uplink(phi) <= exact(phi, sc.uplink_channels[0]) * (1 + 1e-10)


def test_vanishing_radar_threshold_matches_comm_only(small_scenario, fast_options):
    """With tau_rad close to zero the sensing constraint is inactive and FD equals comm-only."""
    spec = PowerMinSpec.uniform(small_scenario, 1e-8, TAU_UL, TAU_DL)
    fd = sca_power_min(spec, fast_options)
    comm = comm_only_power_min(spec, fast_options)
    assert fd.tx.total_power == pytest.approx(comm.tx.total_power, rel=1e-3)
    assert fd.report.radar >= 1e-8
