"""Tests for the sensing-plus-uplink special case and its AO solver."""

from dataclasses import replace

import numpy as np
import pytest

import src.core.optim.special_case as special_case_module
from src.core.beamforming.design import TxDesign
from src.core.beamforming.sinr import optimal_receivers, radar_sinr, uplink_sinr
from src.core.channel.geometry import db_to_linear
from src.core.channel.scenario import normalize_scenario
from src.core.channel.generator import generate_scenario
from src.core.conic.solver import SolveStatus, solve
from src.core.exceptions import IterationLimitError, SolverStallError
from src.core.optim import (
    PowerMinSpec,
    ScaOptions,
    ao_special_case,
    build_special_sdp,
    build_special_socp,
    compute_tilde_constants,
    sca_power_min,
)
from src.core.optim.common import max_rank_ratio
from tests.conftest import random_psd, small_config

TAU_RAD = db_to_linear(6.0)
TAU_UL = db_to_linear(5.0)


def _anchor_receivers(scenario):
    n_tx = scenario.geometry.n_tx
    tx = TxDesign(np.zeros((0, n_tx)), scenario.p_max_bs / (2 * n_tx) * np.eye(n_tx), scenario.p_max_ul / 2)
    return optimal_receivers(tx, scenario)


def test_tilde_constants_reproduce_sinrs(rng, uplink_scenario):
    """The scalar SINR forms built from the constants match the matrix SINRs."""
    sc = uplink_scenario
    tx = TxDesign(np.zeros((0, 4)), random_psd(rng, 4, scale=1e-3), np.array([1e-3, 4e-3]))
    rx = _anchor_receivers(sc)
    c = compute_tilde_constants(rx, sc)
    V0, p = tx.radar_cov, tx.ul_powers

    def quad(vec):
        return float(np.real(np.vdot(vec, V0 @ vec)))

    radar = quad(c.e) / (quad(c.f) + c.g @ p + c.h)
    assert radar == pytest.approx(radar_sinr(tx, rx, sc), rel=1e-9)
    for k in range(sc.n_ul):
        ul = c.a[k] * p[k] / (quad(c.b[k]) + c.c[k] @ p + c.d[k])
        assert ul == pytest.approx(uplink_sinr(k, tx, rx, sc), rel=1e-9)
    assert np.all(np.diag(c.c) == 0)


def test_socp_matches_sdp_with_rank_one_optimum(uplink_scenario):
    """For fixed receivers the SOCP optimum equals the SDP optimum, whose V_0 is rank one."""
    sc = normalize_scenario(uplink_scenario, 1e-3)
    constants = compute_tilde_constants(_anchor_receivers(sc), sc)
    tau_ul = np.full(sc.n_ul, TAU_UL)

    socp = solve(build_special_socp(constants, TAU_RAD, tau_ul))
    sdp_program = build_special_sdp(constants, TAU_RAD, tau_ul)
    sdp = solve(sdp_program)
    assert socp.ok and sdp.ok
    assert socp.objective_value ** 2 == pytest.approx(sdp.objective_value, rel=1e-4)
    V0 = sdp_program.hermitian["V_0"].value(sdp.primal)
    assert max_rank_ratio([V0]) <= 1e-5


def test_socp_structure(uplink_scenario):
    """One radar cone with its phase row, one cone per uplink user, one objective cone."""
    sc = normalize_scenario(uplink_scenario, 1e-3)
    constants = compute_tilde_constants(_anchor_receivers(sc), sc)
    program = build_special_socp(constants, TAU_RAD, np.full(sc.n_ul, TAU_UL))
    assert program.count("soc", "radar") == 1
    assert program.count("eq", "radar") == 1
    assert program.count("soc", "uplink") == sc.n_ul
    assert program.count("soc") == sc.n_ul + 2


def test_ao_meets_constraints(uplink_scenario, fast_options):
    """AO reaches a design meeting the radar and uplink thresholds with settled power."""
    result = ao_special_case(uplink_scenario, TAU_RAD, np.full(2, TAU_UL), fast_options)
    assert result.report.meets(TAU_RAD, np.full(2, TAU_UL), None, rtol=1e-4)
    trace = result.state.objective_trace
    assert trace[-1] == pytest.approx(result.tx.total_power, rel=1e-6)
    assert all(b <= a * (1 + 1e-4) for a, b in zip(trace, trace[1:]))
    assert not np.any(result.tx.dl_beams)
    assert {row["method"] for row in result.state.trace} == {"ao"}


def test_ao_agrees_with_sca(uplink_scenario, fast_options):
    """Both solvers of the special case land within 1% of each other."""
    tau_ul = np.full(2, TAU_UL)
    ao = ao_special_case(uplink_scenario, TAU_RAD, tau_ul, fast_options)
    sca = sca_power_min(PowerMinSpec(uplink_scenario, TAU_RAD, tau_ul, np.zeros(0)), fast_options)
    assert ao.tx.total_power == pytest.approx(sca.tx.total_power, rel=1e-2)


def test_ao_rejects_downlink_users(small_scenario):
    """The special case is only defined without downlink users."""
    with pytest.raises(ValueError, match="downlink"):
        ao_special_case(small_scenario, TAU_RAD, np.full(2, TAU_UL))


def test_ao_iteration_cap_carries_result(uplink_scenario):
    """Stopping after one iteration raises with the iterate attached."""
    opts = ScaOptions(epsilon=1e-12, max_iters=1)
    with pytest.raises(IterationLimitError) as excinfo:
        ao_special_case(uplink_scenario, TAU_RAD, np.full(2, TAU_UL), opts)
    assert excinfo.value.iterations == 1
    assert excinfo.value.result.tx.total_power > 0


def _failing_solve(fail_on):
    """solve() that reports a numerical failure on the given call numbers."""
    calls = {"n": 0}

    def wrapped(program, settings=None):
        calls["n"] += 1
        solution = solve(program, settings)
        if calls["n"] in fail_on:
            return replace(solution, status=SolveStatus.INFEASIBLE)
        return solution

    return wrapped


def test_ao_restores_an_infeasible_start(uplink_scenario, fast_options, monkeypatch):
    """A first SOCP reported infeasible triggers restoration, after which AO converges."""
    monkeypatch.setattr(special_case_module, "solve", _failing_solve({1}))
    tau_ul = np.full(2, TAU_UL)
    result = ao_special_case(uplink_scenario, TAU_RAD, tau_ul, fast_options)
    assert result.state.restoration_steps >= 1
    assert result.report.meets(TAU_RAD, tau_ul, None, rtol=1e-4)


def test_ao_solver_failure_after_progress_is_reported(uplink_scenario, monkeypatch):
    """An SOCP failing at iteration 3 raises with the last accepted iterate."""
    monkeypatch.setattr(special_case_module, "solve", _failing_solve({3}))
    opts = ScaOptions(epsilon=1e-12, max_iters=10)
    with pytest.raises(SolverStallError) as excinfo:
        ao_special_case(uplink_scenario, TAU_RAD, np.full(2, TAU_UL), opts)
    assert excinfo.value.iterations == 2
    assert excinfo.value.result.state.iteration == 2
    assert excinfo.value.result.tx.total_power > 0


@pytest.mark.slow
def test_fixed_receiver_sdp_is_rank_one_and_matches_socp():
    """On 50 random instances the SDP optimum is rank one and equals the SOCP optimum within 0.1%."""
    for seed in range(50):
        sc = normalize_scenario(generate_scenario(small_config(seed=seed, l=0)), 1e-3)
        constants = compute_tilde_constants(_anchor_receivers(sc), sc)
        tau_ul = np.full(sc.n_ul, TAU_UL)
        socp = solve(build_special_socp(constants, TAU_RAD, tau_ul))
        sdp_program = build_special_sdp(constants, TAU_RAD, tau_ul)
        sdp = solve(sdp_program)
        assert socp.ok == sdp.ok, f"seed {seed}"
        if not sdp.ok:
            continue
        assert socp.objective_value ** 2 == pytest.approx(sdp.objective_value, rel=1e-3), f"seed {seed}"
        V0 = sdp_program.hermitian["V_0"].value(sdp.primal)
        assert max_rank_ratio([V0]) <= 1e-6, f"seed {seed}"
