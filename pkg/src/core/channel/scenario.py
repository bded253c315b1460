"""Channel realization of one full-duplex ISAC deployment."""

import logging
from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np

from src.core.channel.geometry import ArrayGeometry, steering_rx, steering_tx

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PointScatterer:
    """Target or clutter point at a known angle with complex reflection amplitude."""
    angle_deg: float
    power_gain: float
    amplitude: complex

    def __post_init__(self):
        if not -90.0 <= self.angle_deg <= 90.0:
            raise ValueError(f"scatterer angle {self.angle_deg} outside [-90, 90]")
        if self.power_gain < 0:
            raise ValueError("scatterer power_gain must be nonnegative")
        if not np.isclose(abs(self.amplitude) ** 2, self.power_gain, rtol=1e-12, atol=0.0):
            raise ValueError("|amplitude|^2 must equal power_gain")

    @classmethod
    def with_phase(cls, angle_deg: float, power_gain: float, phase: float = 0.0) -> "PointScatterer":
        return cls(angle_deg, power_gain, complex(np.sqrt(power_gain) * np.exp(1j * phase)))

    def scaled(self, gain_factor: float) -> "PointScatterer":
        """Same scatterer with |beta|^2 multiplied by gain_factor."""
        return PointScatterer(
            self.angle_deg,
            self.power_gain * gain_factor,
            complex(self.amplitude * np.sqrt(gain_factor)),
        )


def _frozen(array, dtype, shape_name: str, ndim: int) -> np.ndarray:
    out = np.array(array, dtype=dtype)
    if out.ndim != ndim:
        raise ValueError(f"{shape_name} must be {ndim}-D, got shape {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Scenario:
    """One channel realization plus noise and power budgets (all linear, watts)."""
    geometry: ArrayGeometry
    target: PointScatterer
    interferers: Tuple[PointScatterer, ...]
    si_channel: np.ndarray          # N_r x N_t
    si_power: float                 # alpha_SI
    uplink_channels: np.ndarray     # K x N_r, row k is h_k
    downlink_channels: np.ndarray   # L x N_t, row l is g_l
    noise_rx: float
    noise_dl: np.ndarray            # L
    p_max_bs: float
    p_max_ul: np.ndarray            # K
    label: str = field(default="", compare=False)

    def __post_init__(self):
        g = self.geometry
        object.__setattr__(self, "interferers", tuple(self.interferers))
        object.__setattr__(self, "si_channel", _frozen(self.si_channel, complex, "si_channel", 2))
        ul = np.asarray(self.uplink_channels, dtype=complex).reshape(-1, g.n_rx)
        dl = np.asarray(self.downlink_channels, dtype=complex).reshape(-1, g.n_tx)
        object.__setattr__(self, "uplink_channels", _frozen(ul, complex, "uplink_channels", 2))
        object.__setattr__(self, "downlink_channels", _frozen(dl, complex, "downlink_channels", 2))
        object.__setattr__(self, "noise_dl", _frozen(np.atleast_1d(self.noise_dl), float, "noise_dl", 1))
        object.__setattr__(self, "p_max_ul", _frozen(np.atleast_1d(self.p_max_ul), float, "p_max_ul", 1))

        if self.si_channel.shape != (g.n_rx, g.n_tx):
            raise ValueError(f"si_channel shape {self.si_channel.shape} != {(g.n_rx, g.n_tx)}")
        if self.noise_dl.size != self.n_dl:
            raise ValueError("noise_dl needs one entry per downlink user")
        if self.p_max_ul.size != self.n_ul:
            raise ValueError("p_max_ul needs one entry per uplink user")
        for scatterer in self.interferers:
            if np.isclose(scatterer.angle_deg, self.target.angle_deg):
                raise ValueError(
                    f"interferer at {scatterer.angle_deg} deg coincides with the target"
                )
        if not self.noise_rx > 0 or np.any(self.noise_dl <= 0):
            raise ValueError("noise powers must be positive")
        powers = [self.si_power, self.p_max_bs, *self.p_max_ul]
        if not all(np.isfinite(p) and p >= 0 for p in powers):
            raise ValueError("power fields must be finite and nonnegative")

    @property
    def n_ul(self) -> int:
        return self.uplink_channels.shape[0]

    @property
    def n_dl(self) -> int:
        return self.downlink_channels.shape[0]

    def without_uplink(self) -> "Scenario":
        """View with K = 0 (downlink slot of the half-duplex scheme)."""
        g = self.geometry
        return replace(
            self,
            uplink_channels=np.zeros((0, g.n_rx), dtype=complex),
            p_max_ul=np.zeros(0),
        )

    def without_downlink(self) -> "Scenario":
        """View with L = 0 (uplink slot of the half-duplex scheme)."""
        g = self.geometry
        return replace(
            self,
            downlink_channels=np.zeros((0, g.n_tx), dtype=complex),
            noise_dl=np.zeros(0),
        )

    def with_target_gain(self, power_gain: float) -> "Scenario":
        return replace(self, target=PointScatterer.with_phase(
            self.target.angle_deg, power_gain, float(np.angle(self.target.amplitude))
        ))


def effective_matrix(scatterer: PointScatterer, geometry: ArrayGeometry) -> np.ndarray:
    """A(theta) = a_r(theta) a_t(theta)^H, rank one with unit Frobenius norm."""
    a_r = steering_rx(geometry, scatterer.angle_deg)
    a_t = steering_tx(geometry, scatterer.angle_deg)
    return np.outer(a_r, a_t.conj())


def interference_channels(scenario: Scenario) -> Tuple[np.ndarray, np.ndarray]:
    """(B, C): interference seen by the radar receiver and by the uplink receivers.

    B sums clutter and SI; C additionally contains the target echo, so C - B is
    exactly beta_0 A(theta_0).
    """
    geometry = scenario.geometry
    B = np.array(scenario.si_channel, dtype=complex)
    for scatterer in scenario.interferers:
        B = B + scatterer.amplitude * effective_matrix(scatterer, geometry)
    C = B + scenario.target.amplitude * effective_matrix(scenario.target, geometry)
    return B, C


def normalize_scenario(scenario: Scenario, power_unit: float) -> Scenario:
    """Rescale so noise powers are 1 and transmit powers count in `power_unit`.

    Designs whose powers are divided by `power_unit` keep every SINR of the
    original scenario.
    """
    rx_scale = power_unit / scenario.noise_rx
    dl_scale = power_unit / scenario.noise_dl
    return replace(
        scenario,
        target=scenario.target.scaled(rx_scale),
        interferers=tuple(s.scaled(rx_scale) for s in scenario.interferers),
        si_channel=scenario.si_channel * np.sqrt(rx_scale),
        si_power=scenario.si_power * rx_scale,
        uplink_channels=scenario.uplink_channels * np.sqrt(rx_scale),
        downlink_channels=scenario.downlink_channels * np.sqrt(dl_scale)[:, None],
        noise_rx=1.0,
        noise_dl=np.ones(scenario.n_dl),
        p_max_bs=scenario.p_max_bs / power_unit,
        p_max_ul=scenario.p_max_ul / power_unit,
    )

