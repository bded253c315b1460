"""Transmit/receive designs and the SINR algebra of the FD ISAC link."""

from src.core.beamforming.design import RxDesign, SinrReport, TxDesign
from src.core.beamforming.sinr import (
    beampattern_gain,
    beampattern_gain_db,
    downlink_sinr,
    evaluate_design,
    optimal_radar_rx,
    optimal_receivers,
    optimal_uplink_rx,
    radar_interference,
    radar_sinr,
    reduced_radar_sinr,
    reduced_uplink_sinr,
    tx_covariance,
    uplink_interference,
    uplink_sinr,
)

__all__ = [
    "RxDesign",
    "SinrReport",
    "TxDesign",
    "beampattern_gain",
    "beampattern_gain_db",
    "downlink_sinr",
    "evaluate_design",
    "optimal_radar_rx",
    "optimal_receivers",
    "optimal_uplink_rx",
    "radar_interference",
    "radar_sinr",
    "reduced_radar_sinr",
    "reduced_uplink_sinr",
    "tx_covariance",
    "uplink_interference",
    "uplink_sinr",
]
