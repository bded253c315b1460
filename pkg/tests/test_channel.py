"""Tests for array geometry, scenario validation and channel generation."""

import numpy as np
import pytest
from pydantic import ValidationError

from src.core.beamforming.sinr import evaluate_design
from src.core.channel.generator import ScenarioConfig, generate_scenario, geometric_si_channel
from src.core.channel.geometry import (
    ArrayGeometry,
    angle_grid,
    db_to_linear,
    dbm_to_watts,
    steering_rx,
    steering_tx,
    watts_to_dbm,
)
from src.core.channel.scenario import PointScatterer, interference_channels, normalize_scenario


def test_unit_conversions():
    """dB and dBm helpers agree with their definitions."""
    assert db_to_linear(-30.0) == pytest.approx(1e-3)
    assert dbm_to_watts(15.0) == pytest.approx(10 ** -1.5)
    assert watts_to_dbm(dbm_to_watts(-100.0)) == pytest.approx(-100.0)


def test_steering_vectors_unit_norm():
    """Steering vectors are unit norm and broadside is all-equal."""
    geometry = ArrayGeometry(8, 6)
    for angle in (-60.0, 0.0, 45.0):
        assert np.linalg.norm(steering_tx(geometry, angle)) == pytest.approx(1.0)
        assert np.linalg.norm(steering_rx(geometry, angle)) == pytest.approx(1.0)
    np.testing.assert_allclose(steering_tx(geometry, 0.0), np.full(8, 1 / np.sqrt(8)))


def test_angle_grid_default_step():
    """The default grid spans [-90, 90] with a quarter-degree step and contains 0."""
    grid = angle_grid()
    assert grid.size == 721
    assert grid[1] - grid[0] == pytest.approx(0.25)
    assert 0.0 in grid


def test_array_geometry_rejects_empty_array():
    """Arrays need at least one element."""
    with pytest.raises(ValueError):
        ArrayGeometry(0, 4)


def test_generate_scenario_is_deterministic():
    """Same config and seed give identical channels; a new seed changes them."""
    a = generate_scenario(ScenarioConfig(seed=7))
    b = generate_scenario(ScenarioConfig(seed=7))
    c = generate_scenario(ScenarioConfig(seed=8))
    np.testing.assert_array_equal(a.uplink_channels, b.uplink_channels)
    np.testing.assert_array_equal(a.si_channel, b.si_channel)
    assert not np.allclose(a.downlink_channels, c.downlink_channels)


def test_default_scenario_parameters(default_scenario):
    """Defaults reproduce the reference setup."""
    sc = default_scenario
    assert (sc.geometry.n_tx, sc.geometry.n_rx, sc.n_ul, sc.n_dl) == (8, 8, 3, 3)
    assert sc.p_max_bs == pytest.approx(dbm_to_watts(15.0))
    np.testing.assert_allclose(sc.p_max_ul, dbm_to_watts(5.0))
    assert sc.noise_rx == pytest.approx(1e-13)
    assert sc.si_power == pytest.approx(1e-11)
    assert sc.target.angle_deg == 0.0
    assert sc.target.power_gain == pytest.approx(1e-10)
    assert [s.angle_deg for s in sc.interferers] == [-60.0, 45.0]
    np.testing.assert_allclose(np.abs(sc.si_channel) ** 2, 1e-11)


def test_path_loss():
    """xi0 (d/d0)^-kappa at the default 200 m."""
    assert ScenarioConfig().path_loss() == pytest.approx(1e-3 * 200.0 ** -3)


def test_scenario_config_rejects_unknown_keys():
    """Unknown keys are configuration errors."""
    with pytest.raises(ValidationError):
        ScenarioConfig.model_validate({"seed": 1, "antennas": 8})


def test_interferer_at_target_angle_rejected():
    """An interferer on the target angle is invalid."""
    config = ScenarioConfig.model_validate(
        {"interferers": [{"angle_deg": 0.0, "power_dbm": -90.0}]}
    )
    with pytest.raises(ValueError, match="coincides"):
        generate_scenario(config)


def test_point_scatterer_amplitude_check():
    """|amplitude|^2 must match the power gain."""
    with pytest.raises(ValueError):
        PointScatterer(0.0, 1.0, 2.0 + 0j)


def test_interference_channels_differ_by_target(small_scenario):
    """C - B is exactly the target echo matrix."""
    B, C = interference_channels(small_scenario)
    geometry = small_scenario.geometry
    a_r = steering_rx(geometry, 0.0)
    a_t = steering_tx(geometry, 0.0)
    np.testing.assert_allclose(C - B, small_scenario.target.amplitude * np.outer(a_r, a_t.conj()))


def test_normalize_scenario_preserves_sinrs(small_scenario, random_tx):
    """Dividing powers by the unit on the normalized view leaves every SINR unchanged."""
    unit = 1e-3
    normalized = normalize_scenario(small_scenario, unit)
    assert normalized.noise_rx == 1.0
    original = evaluate_design(random_tx, small_scenario)
    rescaled = evaluate_design(random_tx.scaled(1.0 / unit), normalized)
    assert rescaled.radar == pytest.approx(original.radar, rel=1e-9)
    np.testing.assert_allclose(rescaled.uplink, original.uplink, rtol=1e-9)
    np.testing.assert_allclose(rescaled.downlink, original.downlink, rtol=1e-9)


def test_half_duplex_views(default_scenario):
    """The half-duplex views drop one user population."""
    dl_only = default_scenario.without_uplink()
    ul_only = default_scenario.without_downlink()
    assert (dl_only.n_ul, dl_only.n_dl) == (0, 3)
    assert (ul_only.n_ul, ul_only.n_dl) == (3, 0)
    np.testing.assert_array_equal(ul_only.uplink_channels, default_scenario.uplink_channels)


def test_geometric_si_channel_and_rician_fading():
    """The geometric SI model is unit modulus and Rician fading generates valid channels."""
    H = geometric_si_channel(ArrayGeometry(4, 4), 10.0)
    np.testing.assert_allclose(np.abs(H), 1.0)
    config = ScenarioConfig.model_validate({
        "si": {"model": "geometric"},
        "fading": {"model": "rician", "rician_k_db": 5.0},
        "seed": 1,
    })
    sc = generate_scenario(config)
    assert sc.uplink_channels.shape == (3, 8)
    np.testing.assert_allclose(np.abs(sc.si_channel) ** 2, 1e-11)
