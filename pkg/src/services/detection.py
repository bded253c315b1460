"""Detection probability of a nonfluctuating point target (Marcum-Q ROC)."""

import logging
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.stats import ncx2

from src.core.channel.geometry import db_to_linear

logger = logging.getLogger(__name__)


def detection_probability(sinr, p_fa):
    """P_d = Q_1(sqrt(2 sinr), sqrt(-2 ln p_fa)).

    Evaluated as the survival function of a noncentral chi-square with two
    degrees of freedom. Accepts scalars or broadcastable arrays.

    Raises:
        ValueError: sinr < 0 or p_fa outside (0, 1)
    """
    sinr = np.asarray(sinr, dtype=float)
    p_fa = np.asarray(p_fa, dtype=float)
    if np.any(sinr < 0) or np.any(~np.isfinite(sinr)):
        raise ValueError("sinr must be finite and nonnegative")
    if np.any(p_fa <= 0) or np.any(p_fa >= 1):
        raise ValueError("p_fa must lie in (0, 1)")

    threshold = -2.0 * np.log(p_fa)  # b^2
    centrality = 2.0 * sinr          # a^2
    sinr_b, threshold_b = np.broadcast_arrays(centrality, threshold)
    p_d = np.where(
        sinr_b > 0,
        ncx2.sf(threshold_b, 2, np.where(sinr_b > 0, sinr_b, 1.0)),
        np.exp(-threshold_b / 2.0),
    )
    p_d = np.clip(p_d, 0.0, 1.0)
    return float(p_d) if p_d.ndim == 0 else p_d


def roc_table(sinr_db: Sequence[float], p_fa: Sequence[float]) -> pd.DataFrame:
    """One row per (p_fa, sinr_db) pair with the detection probability."""
    rows = []
    for pfa in p_fa:
        for s_db in sinr_db:
            rows.append({"p_fa": float(pfa), "sinr_db": float(s_db),
                         "p_d": detection_probability(db_to_linear(s_db), pfa)})
    logger.debug(f"ROC table with {len(rows)} points")
    return pd.DataFrame(rows, columns=["p_fa", "sinr_db", "p_d"])
