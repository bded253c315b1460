"""Lossless rank-one reconstruction of relaxed downlink covariances."""

import logging
from typing import Sequence, Tuple

import numpy as np

from src.core.beamforming.design import project_psd, psd_floor
from src.core.channel.scenario import Scenario
from src.core.config import settings
from src.core.exceptions import DegenerateDesignError
from src.core.optim.common import max_rank_ratio

logger = logging.getLogger(__name__)


def rank_one_extract(
    V_hat: Sequence[np.ndarray],
    p_hat: np.ndarray,
    scenario: Scenario,
    allow_silent_users: bool = False,
    tol: float = 1e-12,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Turn relaxed blocks [V_0, V_1, ..., V_L] into beams, a sensing covariance and powers.

    v_l = (g_l^H V_l g_l)^(-1/2) V_l g_l and V_0* = sum_l V_l + V_0 - sum_l v_l v_l^H.
    Total power, Qbar and every g_l^H V_l g_l are preserved.

    Args:
        V_hat: Relaxed covariance blocks, sensing block first
        p_hat: Uplink powers (returned unchanged)
        scenario: Supplies the downlink channels g_l
        allow_silent_users: Give users with g^H V g == 0 a zero beam instead of raising
        tol: Degeneracy threshold on g^H V g relative to Tr(V_l) ||g||^2

    Returns:
        (beams with one row per DL user, V_0*, p)
    """
    blocks = [(V + V.conj().T) / 2.0 for V in V_hat]
    n_tx = blocks[0].shape[0]
    beams = np.zeros((scenario.n_dl, n_tx), dtype=complex)
    for l, g in enumerate(scenario.downlink_channels):
        V = blocks[l + 1]
        gain = float(np.real(np.vdot(g, V @ g)))
        scale = max(float(np.trace(V).real) * float(np.vdot(g, g).real), 1e-300)
        if gain <= tol * scale:
            if not allow_silent_users:
                raise DegenerateDesignError(f"g^H V g = {gain:.3e} for downlink user {l}")
            logger.debug(f"Downlink user {l} is silent; its covariance joins V_0")
            continue
        beams[l] = V @ g / np.sqrt(gain)

    V0 = sum(blocks) - beams.T @ beams.conj()
    V0 = (V0 + V0.conj().T) / 2.0

    # round-off from the solver can leave V_0 slightly indefinite
    min_eig = float(np.linalg.eigvalsh(V0).min()) if n_tx else 0.0
    if min_eig < psd_floor(V0):
        logger.debug(f"Reconstructed V_0 has eigenvalue {min_eig:.3e}; projecting onto the PSD cone")
    V0 = project_psd(V0) if n_tx else V0
    rank_ratio = max_rank_ratio(np.outer(v, v.conj()) for v in beams if np.any(v))
    if rank_ratio > settings.RANK_TOL:
        logger.warning(f"Beam covariance rank ratio {rank_ratio:.2e} exceeds tolerance")
    return beams, V0, np.array(p_hat, dtype=float)
