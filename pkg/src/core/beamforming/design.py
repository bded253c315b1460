"""Transmit/receive designs and the SINR report they produce."""

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from src.core.config import settings


def psd_floor(matrix: np.ndarray) -> float:
    """Most negative eigenvalue a covariance may carry from round-off."""
    return -settings.PSD_TOL * max(1.0, float(np.trace(matrix).real))


def project_psd(matrix: np.ndarray) -> np.ndarray:
    """Hermitian part of `matrix` with negative eigenvalues set to zero."""
    H = (matrix + matrix.conj().T) / 2.0
    eig, vecs = np.linalg.eigh(H)
    P = (vecs * np.maximum(eig, 0.0)) @ vecs.conj().T
    return (P + P.conj().T) / 2.0


def _readonly(array, dtype) -> np.ndarray:
    out = np.array(array, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TxDesign:
    """DL beams v_l (rows), sensing covariance V_0 and UL transmit powers p_k (watts)."""
    dl_beams: np.ndarray
    radar_cov: np.ndarray
    ul_powers: np.ndarray

    def __post_init__(self):
        radar_cov = np.atleast_2d(np.asarray(self.radar_cov, dtype=complex))
        n_tx = radar_cov.shape[0]
        beams = np.asarray(self.dl_beams, dtype=complex).reshape(-1, n_tx)
        object.__setattr__(self, "radar_cov", _readonly(radar_cov, complex))
        object.__setattr__(self, "dl_beams", _readonly(beams, complex))
        object.__setattr__(self, "ul_powers", _readonly(np.atleast_1d(self.ul_powers), float))

        if radar_cov.shape != (n_tx, n_tx):
            raise ValueError(f"radar_cov must be square, got {radar_cov.shape}")
        if np.max(np.abs(radar_cov - radar_cov.conj().T), initial=0.0) > 1e-10 * max(
            1.0, np.max(np.abs(radar_cov), initial=0.0)
        ):
            raise ValueError("radar_cov must be Hermitian")
        if n_tx and np.linalg.eigvalsh(radar_cov).min() < psd_floor(radar_cov):
            raise ValueError("radar_cov must be positive semidefinite")
        if np.any(self.ul_powers < 0):
            raise ValueError("ul_powers must be nonnegative")

    @property
    def n_tx(self) -> int:
        return self.radar_cov.shape[0]

    @property
    def downlink_power(self) -> float:
        return float(np.sum(np.abs(self.dl_beams) ** 2) + np.trace(self.radar_cov).real)

    @property
    def total_power(self) -> float:
        """Objective of the power-minimization problem: BS power plus UL powers."""
        return self.downlink_power + float(np.sum(self.ul_powers))

    def scaled(self, factor: float) -> "TxDesign":
        """Every power multiplied by `factor` (beams by its square root)."""
        return TxDesign(
            self.dl_beams * np.sqrt(factor), self.radar_cov * factor, self.ul_powers * factor
        )


@dataclass(frozen=True)
class RxDesign:
    """Radar combiner u and uplink combiners w_k (rows)."""
    radar_rx: np.ndarray
    ul_rx: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.radar_rx, dtype=complex).ravel()
        object.__setattr__(self, "radar_rx", _readonly(u, complex))
        object.__setattr__(self, "ul_rx", _readonly(np.asarray(self.ul_rx, dtype=complex).reshape(-1, u.size), complex))
        if not np.any(u):
            raise ValueError("radar_rx must be nonzero")
        for k, w in enumerate(self.ul_rx):
            if not np.any(w):
                raise ValueError(f"ul_rx[{k}] must be nonzero")


@dataclass(frozen=True)
class SinrReport:
    """Linear-scale SINRs of every link, with the receivers that realized them."""
    radar: float
    uplink: np.ndarray
    downlink: np.ndarray
    rx: Optional[RxDesign] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "uplink", _readonly(np.atleast_1d(self.uplink), float))
        object.__setattr__(self, "downlink", _readonly(np.atleast_1d(self.downlink), float))
        values = np.concatenate([[self.radar], self.uplink, self.downlink])
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError(f"SINRs must be finite and nonnegative, got {values}")

    @property
    def uplink_rate(self) -> float:
        return float(np.sum(np.log2(1.0 + self.uplink)))

    @property
    def downlink_rate(self) -> float:
        return float(np.sum(np.log2(1.0 + self.downlink)))

    def sum_rate(self) -> float:
        """Sum of log2(1 + SINR) over all communication users (bits/s/Hz)."""
        return self.uplink_rate + self.downlink_rate

    def slacks(
        self,
        tau_rad: Optional[float] = None,
        tau_ul: Optional[Sequence[float]] = None,
        tau_dl: Optional[Sequence[float]] = None,
    ) -> Dict[str, float]:
        """Achieved/required - 1 per family (worst user); NaN where no threshold applies."""
        def worst(achieved: np.ndarray, required) -> float:
            if required is None or achieved.size == 0:
                return float("nan")
            return float(np.min(achieved / np.asarray(required, dtype=float)) - 1.0)

        radar = float("nan") if not tau_rad else self.radar / tau_rad - 1.0
        return {
            "radar_slack": radar,
            "min_ul_slack": worst(self.uplink, tau_ul),
            "min_dl_slack": worst(self.downlink, tau_dl),
        }

    def meets(self, tau_rad=None, tau_ul=None, tau_dl=None, rtol: float = 1e-5) -> bool:
        return all(
            np.isnan(s) or s >= -rtol for s in self.slacks(tau_rad, tau_ul, tau_dl).values()
        )
