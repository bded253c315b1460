"""SINR algebra of the full-duplex ISAC link.

Expectations over data symbols are taken in closed form through the
transmit covariance Q, so every function here is deterministic.
"""

import logging
from typing import Iterable, Optional

import numpy as np
from scipy import linalg

from src.core.beamforming.design import RxDesign, SinrReport, TxDesign
from src.core.channel.geometry import steering_rx, steering_tx
from src.core.channel.scenario import Scenario, effective_matrix, interference_channels
from src.core.config import settings
from src.core.exceptions import IllConditionedError

logger = logging.getLogger(__name__)


def tx_covariance(tx: TxDesign) -> np.ndarray:
    """Q = sum_l v_l v_l^H + V_0."""
    beams = tx.dl_beams
    return beams.T @ beams.conj() + tx.radar_cov


def _quad(vec: np.ndarray, mat: np.ndarray) -> float:
    return float(np.real(np.vdot(vec, mat @ vec)))


def radar_interference(Q: np.ndarray, ul_powers: np.ndarray, scenario: Scenario) -> np.ndarray:
    """Psi = sum_k p_k h_k h_k^H + B Q B^H + sigma_r^2 I."""
    B, _ = interference_channels(scenario)
    H = scenario.uplink_channels
    psi = (H.T * ul_powers) @ H.conj() + B @ Q @ B.conj().T
    psi = psi + scenario.noise_rx * np.eye(scenario.geometry.n_rx)
    return (psi + psi.conj().T) / 2.0


def uplink_interference(k: int, Q: np.ndarray, ul_powers: np.ndarray, scenario: Scenario) -> np.ndarray:
    """Phi_k = sum_{k' != k} p_k' h_k' h_k'^H + C Q C^H + sigma_r^2 I."""
    _, C = interference_channels(scenario)
    H = scenario.uplink_channels
    others = np.array(ul_powers, dtype=float)
    others[k] = 0.0
    phi = (H.T * others) @ H.conj() + C @ Q @ C.conj().T
    phi = phi + scenario.noise_rx * np.eye(scenario.geometry.n_rx)
    return (phi + phi.conj().T) / 2.0


def hpd_solve(matrix: np.ndarray, rhs: np.ndarray, cond_limit: Optional[float] = None) -> np.ndarray:
    """Solve matrix @ x = rhs for Hermitian positive definite `matrix`."""
    limit = cond_limit or settings.COND_LIMIT
    cond = np.linalg.cond(matrix)
    if not np.isfinite(cond) or cond > limit:
        raise IllConditionedError(float(cond), limit)
    factor = linalg.cho_factor(matrix, lower=True)
    return linalg.cho_solve(factor, rhs)


def radar_sinr(tx: TxDesign, rx: RxDesign, scenario: Scenario) -> float:
    """|beta_0|^2 u^H A Q A^H u / u^H Psi u."""
    Q = tx_covariance(tx)
    u = rx.radar_rx
    A0 = effective_matrix(scenario.target, scenario.geometry)
    signal = scenario.target.power_gain * _quad(A0.conj().T @ u, Q)
    return signal / _quad(u, radar_interference(Q, tx.ul_powers, scenario))


def uplink_sinr(k: int, tx: TxDesign, rx: RxDesign, scenario: Scenario) -> float:
    """p_k |w_k^H h_k|^2 / w_k^H Phi_k w_k."""
    Q = tx_covariance(tx)
    w = rx.ul_rx[k]
    signal = tx.ul_powers[k] * abs(np.vdot(w, scenario.uplink_channels[k])) ** 2
    return float(signal / _quad(w, uplink_interference(k, Q, tx.ul_powers, scenario)))


def downlink_sinr(l: int, tx: TxDesign, scenario: Scenario) -> float:
    """|g_l^H v_l|^2 / (sum_{l' != l} |g_l^H v_l'|^2 + g_l^H V_0 g_l + sigma_l^2)."""
    g = scenario.downlink_channels[l]
    gains = np.abs(tx.dl_beams @ g.conj()) ** 2
    interference = gains.sum() - gains[l] + _quad(g, tx.radar_cov) + scenario.noise_dl[l]
    return float(gains[l] / interference)


def optimal_radar_rx(tx: TxDesign, scenario: Scenario) -> np.ndarray:
    """MVDR combiner u* = Psi^-1 a_r(theta_0)."""
    a_r = steering_rx(scenario.geometry, scenario.target.angle_deg)
    psi = radar_interference(tx_covariance(tx), tx.ul_powers, scenario)
    return hpd_solve(psi, a_r)


def optimal_uplink_rx(k: int, tx: TxDesign, scenario: Scenario) -> np.ndarray:
    """MMSE combiner w_k* = Phi_k^-1 h_k."""
    phi = uplink_interference(k, tx_covariance(tx), tx.ul_powers, scenario)
    return hpd_solve(phi, scenario.uplink_channels[k])


def optimal_receivers(tx: TxDesign, scenario: Scenario) -> RxDesign:
    u = optimal_radar_rx(tx, scenario)
    w = [optimal_uplink_rx(k, tx, scenario) for k in range(scenario.n_ul)]
    return RxDesign(u, np.array(w).reshape(-1, scenario.geometry.n_rx))


def reduced_radar_sinr_from(Q: np.ndarray, ul_powers: np.ndarray, scenario: Scenario) -> float:
    """|beta_0|^2 (a_t^H Q a_t)(a_r^H Psi^-1 a_r) for a raw covariance/power pair."""
    a_t = steering_tx(scenario.geometry, scenario.target.angle_deg)
    a_r = steering_rx(scenario.geometry, scenario.target.angle_deg)
    psi = radar_interference(Q, ul_powers, scenario)
    return scenario.target.power_gain * _quad(a_t, Q) * float(np.real(np.vdot(a_r, hpd_solve(psi, a_r))))


def reduced_uplink_sinr_from(k: int, Q: np.ndarray, ul_powers: np.ndarray, scenario: Scenario) -> float:
    """p_k h_k^H Phi_k^-1 h_k for a raw covariance/power pair."""
    h = scenario.uplink_channels[k]
    phi = uplink_interference(k, Q, ul_powers, scenario)
    return float(ul_powers[k] * np.real(np.vdot(h, hpd_solve(phi, h))))


def reduced_radar_sinr(tx: TxDesign, scenario: Scenario) -> float:
    """Radar SINR at the optimal combiner."""
    return reduced_radar_sinr_from(tx_covariance(tx), tx.ul_powers, scenario)


def reduced_uplink_sinr(k: int, tx: TxDesign, scenario: Scenario) -> float:
    """Uplink SINR of user k at its optimal combiner."""
    return reduced_uplink_sinr_from(k, tx_covariance(tx), tx.ul_powers, scenario)


def evaluate_design(tx: TxDesign, scenario: Scenario, rx: Optional[RxDesign] = None) -> SinrReport:
    """All SINRs of `tx`; the optimal receivers are used when `rx` is omitted."""
    if rx is None:
        rx = optimal_receivers(tx, scenario)
    return SinrReport(
        radar=radar_sinr(tx, rx, scenario),
        uplink=np.array([uplink_sinr(k, tx, rx, scenario) for k in range(scenario.n_ul)]),
        downlink=np.array([downlink_sinr(l, tx, scenario) for l in range(scenario.n_dl)]),
        rx=rx,
    )


def beampattern_gain(
    tx: TxDesign, rx: RxDesign, scenario: Scenario, angle_grid: Iterable[float]
) -> np.ndarray:
    """u^H A(theta) Q A(theta)^H u / (sigma_r^2 u^H u) per grid angle."""
    Q = tx_covariance(tx)
    u = rx.radar_rx
    geometry = scenario.geometry
    norm = scenario.noise_rx * float(np.vdot(u, u).real)
    gains = []
    for angle in angle_grid:
        # u^H a_r a_t^H Q a_t a_r^H u = |a_r^H u|^2 a_t^H Q a_t
        a_t = steering_tx(geometry, angle)
        a_r = steering_rx(geometry, angle)
        gains.append(abs(np.vdot(a_r, u)) ** 2 * _quad(a_t, Q) / norm)
    return np.maximum(np.array(gains), 0.0)


def beampattern_gain_db(
    tx: TxDesign, rx: RxDesign, scenario: Scenario, angle_grid: Iterable[float], floor_db: float = -300.0
) -> np.ndarray:
    """beampattern_gain in dB, clipped below at floor_db."""
    gains = beampattern_gain(tx, rx, scenario, angle_grid)
    return 10.0 * np.log10(np.maximum(gains, 10.0 ** (floor_db / 10.0)))


def main_lobe_at(angle_grid: np.ndarray, gains_db: np.ndarray, angle_deg: float,
                 tol_db: Optional[float] = None) -> bool:
    """Whether the grid point nearest `angle_deg` carries the peak gain, within `tol_db`.

    The receive combiner is not symmetric about the target, so the product
    pattern may crest one grid step away from it.
    """
    tol = settings.MAIN_LOBE_TOL_DB if tol_db is None else tol_db
    nearest = int(np.argmin(np.abs(np.asarray(angle_grid) - angle_deg)))
    return bool(gains_db[nearest] >= np.max(gains_db) - tol)
