"""Comparison schemes: communication-only designs and half-duplex TDD operation."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from src.core.channel.scenario import Scenario
from src.core.exceptions import InfeasibleError, IterationLimitError
from src.core.optim.common import ScaOptions
from src.core.optim.power_min import PowerMinResult, PowerMinSpec, sca_power_min
from src.core.optim.rate_max import RateMaxResult, RateMaxSpec, sca_rate_max
from src.core.optim.special_case import ao_special_case

logger = logging.getLogger(__name__)


def comm_only_power_min(spec: PowerMinSpec, options: Optional[ScaOptions] = None) -> PowerMinResult:
    """Power minimization with the sensing constraint removed."""
    return sca_power_min(spec, options, disabled={"radar"})


def comm_only_rate_max(spec: RateMaxSpec, options: Optional[ScaOptions] = None) -> RateMaxResult:
    """Sum-rate maximization with the sensing constraint removed."""
    return sca_rate_max(spec, options, disabled={"radar"})


@dataclass(frozen=True)
class HdThresholds:
    tau_dl_bar: np.ndarray
    tau_ul_bar: np.ndarray


def hd_rate_matched_thresholds(tau_dl, tau_ul) -> HdThresholds:
    """(1 + tau)^2 - 1: half the airtime at the doubled SINR gives the same rate."""
    tau_dl = np.atleast_1d(np.asarray(tau_dl, dtype=float))
    tau_ul = np.atleast_1d(np.asarray(tau_ul, dtype=float))
    if np.any(tau_dl < 0) or np.any(tau_ul < 0):
        raise ValueError("SINR thresholds must be nonnegative")
    return HdThresholds((1.0 + tau_dl) ** 2 - 1.0, (1.0 + tau_ul) ** 2 - 1.0)


@dataclass(frozen=True)
class HdResult:
    """Per-slot objectives of the two TDD slots and their equal-duration averages."""
    p_dl: float = float("nan")
    p_ul: float = float("nan")
    r_dl: float = float("nan")
    r_ul: float = float("nan")
    iterations: int = 0

    @property
    def p_avg(self) -> float:
        return 0.5 * (self.p_dl + self.p_ul)

    @property
    def r_avg(self) -> float:
        return 0.5 * (self.r_dl + self.r_ul)


def _settle(result_or_error):
    """Unwrap the best iterate of a run that hit the iteration cap."""
    if isinstance(result_or_error, IterationLimitError):
        logger.warning(f"HD slot stopped at the iteration cap ({result_or_error.iterations}); using best iterate")
        return result_or_error.result
    return result_or_error


def _run_slots(dl_slot: Callable, ul_slot: Callable) -> Tuple:
    """Run both slots concurrently; infeasibility is re-raised with the slot name."""
    def guarded(slot: str, fn: Callable):
        try:
            return fn()
        except IterationLimitError as exc:
            return exc
        except InfeasibleError as exc:
            raise InfeasibleError(exc.family, slot=slot) from exc

    with ThreadPoolExecutor(max_workers=2, thread_name_prefix="hd-slot") as pool:
        dl_future = pool.submit(guarded, "dl", dl_slot)
        ul_future = pool.submit(guarded, "ul", ul_slot)
        return _settle(dl_future.result()), _settle(ul_future.result())


def hd_power_min(scenario: Scenario, tau_rad: float, tau_dl, tau_ul,
                 options: Optional[ScaOptions] = None) -> HdResult:
    """Average power of a TDD schedule meeting the same rates as full duplex.

    DL slot: power minimization without uplink users. UL slot: the
    sensing-plus-uplink problem, solved by alternating optimization.
    """
    bars = hd_rate_matched_thresholds(
        np.broadcast_to(tau_dl, (scenario.n_dl,)), np.broadcast_to(tau_ul, (scenario.n_ul,))
    )
    dl_view, ul_view = scenario.without_uplink(), scenario.without_downlink()
    dl, ul = _run_slots(
        lambda: sca_power_min(PowerMinSpec(dl_view, tau_rad, np.zeros(0), bars.tau_dl_bar), options),
        lambda: ao_special_case(ul_view, tau_rad, bars.tau_ul_bar, options),
    )
    result = HdResult(
        p_dl=dl.tx.total_power,
        p_ul=ul.tx.total_power,
        r_dl=dl.report.downlink_rate,
        r_ul=ul.report.uplink_rate,
        iterations=dl.state.iteration + ul.state.iteration,
    )
    logger.info(f"HD power: DL {result.p_dl:.4e} W, UL {result.p_ul:.4e} W, average {result.p_avg:.4e} W")
    return result


def hd_rate_max(scenario: Scenario, tau_rad: float, options: Optional[ScaOptions] = None) -> HdResult:
    """Average sum rate of the two TDD slots, each run as rate maximization."""
    dl, ul = _run_slots(
        lambda: sca_rate_max(RateMaxSpec(scenario.without_uplink(), tau_rad), options),
        lambda: sca_rate_max(RateMaxSpec(scenario.without_downlink(), tau_rad), options),
    )
    result = HdResult(
        p_dl=dl.tx.total_power,
        p_ul=ul.tx.total_power,
        r_dl=dl.sum_rate,
        r_ul=ul.sum_rate,
        iterations=dl.state.iteration + ul.state.iteration,
    )
    logger.info(f"HD rate: DL {result.r_dl:.4f}, UL {result.r_ul:.4f}, average {result.r_avg:.4f} bit/s/Hz")
    return result
