"""Declarative scenario configuration and seeded channel generation."""

import json
import logging
from pathlib import Path
from typing import List, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.core.channel.geometry import (
    ArrayGeometry,
    db_to_linear,
    dbm_to_watts,
    steering_tx,
)
from src.core.channel.scenario import PointScatterer, Scenario

logger = logging.getLogger(__name__)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GeometryConfig(_Strict):
    n_tx: int = Field(8, ge=1)
    n_rx: int = Field(8, ge=1)
    spacing: float = Field(0.5, gt=0)


class ScattererConfig(_Strict):
    """Echo power is quoted in dBm received per 0 dBm transmitted."""
    angle_deg: float = Field(..., ge=-90, le=90)
    power_dbm: float


class SelfInterferenceConfig(_Strict):
    alpha_db: float = -110.0
    model: Literal["random_phase", "geometric"] = "random_phase"
    separation_wavelengths: float = Field(10.0, gt=0)


class UsersConfig(_Strict):
    k: int = Field(3, ge=0)
    l: int = Field(3, ge=0)
    distance_m: float = 200.0

    @field_validator("distance_m")
    @classmethod
    def _positive_distance(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("user distance must be positive")
        return v


class PathLossConfig(_Strict):
    xi0_db: float = -30.0
    d0_m: float = Field(1.0, gt=0)
    kappa: float = 3.0


class FadingConfig(_Strict):
    model: Literal["rayleigh", "rician"] = "rayleigh"
    rician_k_db: float = 0.0


class NoiseConfig(_Strict):
    rx_dbm: float = -100.0
    dl_dbm: float = -100.0


class PowerConfig(_Strict):
    bs_dbm: float = 15.0
    ul_dbm: float = 5.0


def _default_interferers() -> List[ScattererConfig]:
    return [
        ScattererConfig(angle_deg=-60.0, power_dbm=-90.0),
        ScattererConfig(angle_deg=45.0, power_dbm=-90.0),
    ]


class ScenarioConfig(_Strict):
    """Scenario parameters in engineering units; defaults are the reference setup."""
    geometry: GeometryConfig = Field(default_factory=GeometryConfig)
    target: ScattererConfig = Field(
        default_factory=lambda: ScattererConfig(angle_deg=0.0, power_dbm=-100.0)
    )
    interferers: List[ScattererConfig] = Field(default_factory=_default_interferers)
    si: SelfInterferenceConfig = Field(default_factory=SelfInterferenceConfig)
    users: UsersConfig = Field(default_factory=UsersConfig)
    pathloss: PathLossConfig = Field(default_factory=PathLossConfig)
    fading: FadingConfig = Field(default_factory=FadingConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    power: PowerConfig = Field(default_factory=PowerConfig)
    seed: int = Field(0, ge=0)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ScenarioConfig":
        return cls.model_validate_json(Path(path).read_text())

    def to_json(self) -> str:
        """Canonical text form (sorted keys, two-space indent)."""
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True)

    def path_loss(self) -> float:
        """xi = xi0 (d/d0)^-kappa."""
        p = self.pathloss
        return db_to_linear(p.xi0_db) * (self.users.distance_m / p.d0_m) ** (-p.kappa)


def _fading(rng: np.random.Generator, n_users: int, n_ant: int, spacing: float,
            xi: float, fading: FadingConfig) -> np.ndarray:
    nlos = np.sqrt(xi / 2.0) * (
        rng.standard_normal((n_users, n_ant)) + 1j * rng.standard_normal((n_users, n_ant))
    )
    if fading.model == "rayleigh":
        return nlos
    k = db_to_linear(fading.rician_k_db)
    angles = rng.uniform(-90.0, 90.0, size=n_users)
    geometry = ArrayGeometry(n_tx=n_ant, n_rx=n_ant, spacing_over_wavelength=spacing)
    los = np.stack([np.sqrt(xi * n_ant) * steering_tx(geometry, a) for a in angles]) \
        if n_users else np.zeros((0, n_ant), dtype=complex)
    return np.sqrt(k / (k + 1.0)) * los + np.sqrt(1.0 / (k + 1.0)) * nlos


def geometric_si_channel(geometry: ArrayGeometry, separation_wavelengths: float) -> np.ndarray:
    """Unit-modulus SI response of parallel arrays: exp(-j 2 pi d_pq / lambda)."""
    s = geometry.spacing_over_wavelength
    p = np.arange(geometry.n_rx)[:, None]
    q = np.arange(geometry.n_tx)[None, :]
    d_over_lambda = np.sqrt(((p - q) * s) ** 2 + separation_wavelengths ** 2)
    return np.exp(-2j * np.pi * d_over_lambda)


def generate_scenario(config: ScenarioConfig) -> Scenario:
    """Draw one channel realization; a pure function of `config` (seed included)."""
    rng = np.random.default_rng(config.seed)
    geometry = ArrayGeometry(config.geometry.n_tx, config.geometry.n_rx, config.geometry.spacing)
    xi = config.path_loss()
    K, L = config.users.k, config.users.l

    target = PointScatterer.with_phase(
        config.target.angle_deg, db_to_linear(config.target.power_dbm),
        rng.uniform(0.0, 2.0 * np.pi),
    )
    interferers = tuple(
        PointScatterer.with_phase(i.angle_deg, db_to_linear(i.power_dbm), rng.uniform(0.0, 2.0 * np.pi))
        for i in config.interferers
    )

    alpha = db_to_linear(config.si.alpha_db)
    if config.si.model == "random_phase":
        phases = rng.uniform(0.0, 2.0 * np.pi, size=(geometry.n_rx, geometry.n_tx))
        si_channel = np.sqrt(alpha) * np.exp(1j * phases)
    else:
        si_channel = np.sqrt(alpha) * geometric_si_channel(geometry, config.si.separation_wavelengths)

    uplink = _fading(rng, K, geometry.n_rx, geometry.spacing_over_wavelength, xi, config.fading)
    downlink = _fading(rng, L, geometry.n_tx, geometry.spacing_over_wavelength, xi, config.fading)

    noise_rx = dbm_to_watts(config.noise.rx_dbm)
    scenario = Scenario(
        geometry=geometry,
        target=target,
        interferers=interferers,
        si_channel=si_channel,
        si_power=alpha,
        uplink_channels=uplink,
        downlink_channels=downlink,
        noise_rx=noise_rx,
        noise_dl=np.full(L, dbm_to_watts(config.noise.dl_dbm)),
        p_max_bs=dbm_to_watts(config.power.bs_dbm),
        p_max_ul=np.full(K, dbm_to_watts(config.power.ul_dbm)),
        label=f"seed={config.seed}",
    )
    logger.debug(f"Generated scenario seed={config.seed}: K={K}, L={L}, xi={xi:.3e}")
    return scenario
