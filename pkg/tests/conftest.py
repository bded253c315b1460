"""Shared fixtures: small seeded scenarios and random designs."""

import numpy as np
import pytest

from src.core.beamforming.design import TxDesign
from src.core.channel.generator import GeometryConfig, ScenarioConfig, UsersConfig, generate_scenario
from src.core.channel.geometry import ArrayGeometry, dbm_to_watts
from src.core.channel.scenario import PointScatterer, Scenario
from src.core.optim.common import ScaOptions


def random_psd(rng: np.random.Generator, n: int, rank: int = None, scale: float = 1.0) -> np.ndarray:
    rank = rank or n
    X = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return scale * X @ X.conj().T / rank


def small_config(seed: int = 3, n_ant: int = 4, k: int = 2, l: int = 2) -> ScenarioConfig:
    return ScenarioConfig(
        geometry=GeometryConfig(n_tx=n_ant, n_rx=n_ant),
        users=UsersConfig(k=k, l=l),
        seed=seed,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(2024)


@pytest.fixture
def default_scenario() -> Scenario:
    """Reference setup: 8 antennas, 3 + 3 users."""
    return generate_scenario(ScenarioConfig(seed=7))


@pytest.fixture
def small_scenario() -> Scenario:
    """N_t = N_r = 4, K = L = 2."""
    return generate_scenario(small_config())


@pytest.fixture
def uplink_scenario() -> Scenario:
    """N_t = N_r = 4, K = 2, no downlink users."""
    return generate_scenario(small_config(seed=5, l=0))


@pytest.fixture
def single_user_scenario() -> Scenario:
    """One downlink user, no uplink, no clutter and no self-interference."""
    geometry = ArrayGeometry(4, 4)
    rng = np.random.default_rng(11)
    g = (rng.standard_normal(4) + 1j * rng.standard_normal(4)) * 1e-5
    return Scenario(
        geometry=geometry,
        target=PointScatterer.with_phase(0.0, 1e-10, 0.3),
        interferers=(),
        si_channel=np.zeros((4, 4)),
        si_power=0.0,
        uplink_channels=np.zeros((0, 4)),
        downlink_channels=g[None, :],
        noise_rx=dbm_to_watts(-100.0),
        noise_dl=[dbm_to_watts(-100.0)],
        p_max_bs=dbm_to_watts(15.0),
        p_max_ul=np.zeros(0),
    )


@pytest.fixture
def random_tx(rng, small_scenario) -> TxDesign:
    n_tx = small_scenario.geometry.n_tx
    beams = (rng.standard_normal((small_scenario.n_dl, n_tx)) + 1j * rng.standard_normal((small_scenario.n_dl, n_tx))) * 1e-2
    return TxDesign(beams, random_psd(rng, n_tx, scale=1e-3), np.full(small_scenario.n_ul, 1e-3))


@pytest.fixture
def fast_options() -> ScaOptions:
    return ScaOptions(epsilon=1e-4, max_iters=60)
