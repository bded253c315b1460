"""Tests for SINR evaluation and the closed-form receivers."""

import numpy as np
import pytest

from src.core.beamforming.design import RxDesign, SinrReport, TxDesign
from src.core.beamforming.sinr import (
    beampattern_gain,
    beampattern_gain_db,
    downlink_sinr,
    evaluate_design,
    hpd_solve,
    main_lobe_at,
    optimal_receivers,
    radar_sinr,
    reduced_radar_sinr,
    reduced_uplink_sinr,
    tx_covariance,
    uplink_sinr,
)
from src.core.channel.geometry import angle_grid
from src.core.channel.scenario import effective_matrix, interference_channels
from src.core.exceptions import IllConditionedError


def _random_rx(rng, n_rx, n_ul) -> RxDesign:
    u = rng.standard_normal(n_rx) + 1j * rng.standard_normal(n_rx)
    W = rng.standard_normal((n_ul, n_rx)) + 1j * rng.standard_normal((n_ul, n_rx))
    return RxDesign(u, W)


def test_tx_covariance(random_tx):
    """Q is the beam dyads plus the sensing covariance."""
    beams = random_tx.dl_beams
    expected = sum(np.outer(v, v.conj()) for v in beams) + random_tx.radar_cov
    np.testing.assert_allclose(tx_covariance(random_tx), expected)


def test_optimal_receivers_beat_random_receivers(rng, small_scenario, random_tx):
    """No random combiner exceeds the closed-form radar or uplink SINR."""
    best = evaluate_design(random_tx, small_scenario)
    for _ in range(1000):
        rx = _random_rx(rng, small_scenario.geometry.n_rx, small_scenario.n_ul)
        assert radar_sinr(random_tx, rx, small_scenario) <= best.radar * (1 + 1e-9)
        for k in range(small_scenario.n_ul):
            assert uplink_sinr(k, random_tx, rx, small_scenario) <= best.uplink[k] * (1 + 1e-9)


def test_receiver_scale_invariance(rng, small_scenario, random_tx):
    """Scaling the combiners by a complex constant leaves the SINRs unchanged."""
    rx = _random_rx(rng, small_scenario.geometry.n_rx, small_scenario.n_ul)
    scaled = RxDesign(rx.radar_rx * (3.0 - 2.0j), rx.ul_rx * 0.01j)
    assert radar_sinr(random_tx, scaled, small_scenario) == pytest.approx(radar_sinr(random_tx, rx, small_scenario))
    assert uplink_sinr(1, random_tx, scaled, small_scenario) == pytest.approx(uplink_sinr(1, random_tx, rx, small_scenario))


def test_reduced_sinrs_match_optimal_receivers(small_scenario, random_tx):
    """The reduced SINR forms equal the SINRs at the closed-form receivers."""
    rx = optimal_receivers(random_tx, small_scenario)
    assert reduced_radar_sinr(random_tx, small_scenario) == pytest.approx(radar_sinr(random_tx, rx, small_scenario), rel=1e-8)
    for k in range(small_scenario.n_ul):
        assert reduced_uplink_sinr(k, random_tx, small_scenario) == pytest.approx(
            uplink_sinr(k, random_tx, rx, small_scenario), rel=1e-8
        )


def test_downlink_sinr_closed_form(single_user_scenario):
    """A single MRT beam without sensing power reaches P ||g||^2 / sigma^2."""
    sc = single_user_scenario
    g = sc.downlink_channels[0]
    power = 1e-3
    tx = TxDesign(np.sqrt(power) * g[None, :] / np.linalg.norm(g), np.zeros((4, 4)), np.zeros(0))
    expected = power * np.vdot(g, g).real / sc.noise_dl[0]
    assert downlink_sinr(0, tx, sc) == pytest.approx(expected, rel=1e-12)


def test_hpd_solve_rejects_ill_conditioned_matrix():
    """Near-singular matrices raise instead of returning garbage."""
    with pytest.raises(IllConditionedError):
        hpd_solve(np.diag([1.0, 1e-14]), np.ones(2), cond_limit=1e12)


def test_sinr_report_rates_and_slacks():
    """Sum rate and slack bookkeeping of a report."""
    report = SinrReport(radar=8.0, uplink=np.array([1.0, 3.0]), downlink=np.array([7.0]))
    assert report.sum_rate() == pytest.approx(1.0 + 2.0 + 3.0)
    slacks = report.slacks(4.0, [1.0, 1.0], None)
    assert slacks["radar_slack"] == pytest.approx(1.0)
    assert slacks["min_ul_slack"] == pytest.approx(0.0)
    assert np.isnan(slacks["min_dl_slack"])
    assert report.meets(4.0, [1.0, 1.0], [7.0])
    assert not report.meets(9.0)


def test_tx_design_validation():
    """Non-Hermitian sensing covariances and negative powers are rejected."""
    with pytest.raises(ValueError):
        TxDesign(np.zeros((0, 2)), np.array([[1.0, 1.0], [0.0, 1.0]]), np.zeros(0))
    with pytest.raises(ValueError):
        TxDesign(np.zeros((0, 2)), np.eye(2), np.array([-1.0]))


def test_beampattern_peaks_at_steered_angle(default_scenario):
    """Power steered at the target gives the largest gain at the target angle."""
    sc = default_scenario
    a_t = np.full(8, 1 / np.sqrt(8))
    tx = TxDesign(np.zeros((0, 8)), 0.01 * np.outer(a_t, a_t.conj()), np.zeros(sc.n_ul))
    u = np.full(8, 1 / np.sqrt(8), dtype=complex)
    rx = RxDesign(u, np.ones((sc.n_ul, 8)))
    grid = angle_grid()
    gains = beampattern_gain(tx, rx, sc, grid)
    assert grid[np.argmax(gains)] == pytest.approx(0.0)
    assert np.all(gains >= 0)


def test_beampattern_gain_db_clips_nulls(default_scenario):
    """The dB pattern matches the linear one and floors exact nulls."""
    sc = default_scenario
    a_t = np.full(8, 1 / np.sqrt(8))
    rx = RxDesign(np.full(8, 1 / np.sqrt(8), dtype=complex), np.ones((sc.n_ul, 8)))
    grid = angle_grid(181)
    tx = TxDesign(np.zeros((0, 8)), 0.01 * np.outer(a_t, a_t.conj()), np.zeros(sc.n_ul))
    gains = beampattern_gain(tx, rx, sc, grid)
    with np.errstate(divide="ignore"):
        expected = np.maximum(10 * np.log10(gains), -300.0)
    np.testing.assert_allclose(beampattern_gain_db(tx, rx, sc, grid), expected)
    silent = TxDesign(np.zeros((0, 8)), np.zeros((8, 8)), np.zeros(sc.n_ul))
    assert np.all(beampattern_gain_db(silent, rx, sc, grid, floor_db=-200.0) == pytest.approx(-200.0))


def test_sinrs_match_symbol_level_simulation(rng, small_scenario, random_tx):
    """Sample SINRs over 10^5 symbol draws agree with the closed forms within 2%."""
    sc, tx = small_scenario, random_tx
    rx = optimal_receivers(tx, sc)
    n = 100_000
    B, C = interference_channels(sc)
    A0 = sc.target.amplitude * effective_matrix(sc.target, sc.geometry)

    def cn(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    eig, vecs = np.linalg.eigh(tx.radar_cov)
    root = vecs * np.sqrt(np.maximum(eig, 0.0))
    s = cn(sc.n_dl, n)
    x = tx.dl_beams.T @ s + root @ cn(4, n)
    ul = np.sqrt(tx.ul_powers)[:, None] * cn(sc.n_ul, n)
    noise = np.sqrt(sc.noise_rx) * cn(4, n)
    uplink_rx = sc.uplink_channels.T @ ul

    u = rx.radar_rx.conj()
    echo = np.mean(np.abs(u @ (A0 @ x)) ** 2)
    clutter = np.mean(np.abs(u @ (B @ x + uplink_rx + noise)) ** 2)
    assert echo / clutter == pytest.approx(radar_sinr(tx, rx, sc), rel=2e-2)

    for k in range(sc.n_ul):
        w = rx.ul_rx[k].conj()
        own = sc.uplink_channels[k][:, None] * ul[k]
        signal = np.mean(np.abs(w @ own) ** 2)
        rest = np.mean(np.abs(w @ (C @ x + uplink_rx - own + noise)) ** 2)
        assert signal / rest == pytest.approx(uplink_sinr(k, tx, rx, sc), rel=2e-2)

    for l, g in enumerate(sc.downlink_channels):
        received = g.conj() @ x + np.sqrt(sc.noise_dl[l]) * cn(n)
        own = (g.conj() @ tx.dl_beams[l]) * s[l]
        signal = np.mean(np.abs(own) ** 2)
        rest = np.mean(np.abs(received - own) ** 2)
        assert signal / rest == pytest.approx(downlink_sinr(l, tx, sc), rel=2e-2)


def test_main_lobe_at_tolerates_one_step_offset():
    """A crest one step off the target still counts when the target gain is within tolerance."""
    grid = angle_grid()
    gains_db = -0.5 * (grid - 0.25) ** 2
    assert main_lobe_at(grid, gains_db, 0.0)
    assert not main_lobe_at(grid, gains_db, 0.0, tol_db=0.01)
    assert not main_lobe_at(grid, gains_db, 10.0)
