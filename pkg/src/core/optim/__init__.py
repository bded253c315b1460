"""Iterative optimizers: power minimization, the AO special case, rate maximization and benchmarks."""

from src.core.optim.benchmarks import (
    HdResult,
    HdThresholds,
    comm_only_power_min,
    comm_only_rate_max,
    hd_power_min,
    hd_rate_matched_thresholds,
    hd_rate_max,
)
from src.core.optim.common import Restoration, ScaOptions
from src.core.optim.power_min import (
    PowerMinResult,
    PowerMinSpec,
    ScaState,
    build_power_surrogate,
    initial_power_state,
    restore_power_anchor,
    sca_power_min,
    uplink_taylor_bound,
)
from src.core.optim.rank_one import rank_one_extract
from src.core.optim.rate_max import (
    RateMaxResult,
    RateMaxSpec,
    RateScaState,
    build_rate_surrogate,
    dl_rate_lower_bound,
    restore_rate_anchor,
    sca_rate_max,
)
from src.core.optim.special_case import (
    AoState,
    SpecialCaseResult,
    TildeConstants,
    ao_special_case,
    build_special_sdp,
    build_special_socp,
    compute_tilde_constants,
)

__all__ = [
    "AoState",
    "HdResult",
    "HdThresholds",
    "PowerMinResult",
    "PowerMinSpec",
    "RateMaxResult",
    "RateMaxSpec",
    "RateScaState",
    "Restoration",
    "ScaOptions",
    "ScaState",
    "SpecialCaseResult",
    "TildeConstants",
    "ao_special_case",
    "build_power_surrogate",
    "build_rate_surrogate",
    "build_special_sdp",
    "build_special_socp",
    "comm_only_power_min",
    "comm_only_rate_max",
    "compute_tilde_constants",
    "dl_rate_lower_bound",
    "hd_power_min",
    "hd_rate_matched_thresholds",
    "hd_rate_max",
    "initial_power_state",
    "rank_one_extract",
    "restore_power_anchor",
    "restore_rate_anchor",
    "sca_power_min",
    "sca_rate_max",
    "uplink_taylor_bound",
]
