"""Uniform linear array geometry, steering vectors and unit conversions."""

from dataclasses import dataclass

import numpy as np


def db_to_linear(x_db: float) -> float:
    """10^(x/10)."""
    return float(10.0 ** (x_db / 10.0))


def dbm_to_watts(x_dbm: float) -> float:
    """10^((x-30)/10)."""
    return float(10.0 ** ((x_dbm - 30.0) / 10.0))


def watts_to_dbm(x_w: float) -> float:
    return float(10.0 * np.log10(x_w) + 30.0)


@dataclass(frozen=True)
class ArrayGeometry:
    """Co-located transmit and receive ULAs of the base station."""
    n_tx: int = 8
    n_rx: int = 8
    spacing_over_wavelength: float = 0.5

    def __post_init__(self):
        if self.n_tx < 1 or self.n_rx < 1:
            raise ValueError(f"array sizes must be >= 1, got n_tx={self.n_tx}, n_rx={self.n_rx}")
        if not self.spacing_over_wavelength > 0:
            raise ValueError("spacing_over_wavelength must be positive")


def _ula_response(n: int, spacing: float, angle_deg: float) -> np.ndarray:
    phase = 2.0 * np.pi * spacing * np.sin(np.deg2rad(angle_deg))
    return np.exp(1j * phase * np.arange(n)) / np.sqrt(n)


def steering_tx(geometry: ArrayGeometry, angle_deg: float) -> np.ndarray:
    """Unit-norm transmit steering vector a_t(theta)."""
    return _ula_response(geometry.n_tx, geometry.spacing_over_wavelength, angle_deg)


def steering_rx(geometry: ArrayGeometry, angle_deg: float) -> np.ndarray:
    """Unit-norm receive steering vector a_r(theta)."""
    return _ula_response(geometry.n_rx, geometry.spacing_over_wavelength, angle_deg)


def angle_grid(n_points: int = 721, low_deg: float = -90.0, high_deg: float = 90.0) -> np.ndarray:
    """Uniform angle grid; the default has a 0.25 degree step."""
    return np.linspace(low_deg, high_deg, n_points)
