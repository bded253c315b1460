"""Array geometry, channel realizations and scenario generation."""

from src.core.channel.generator import ScenarioConfig, generate_scenario
from src.core.channel.geometry import (
    ArrayGeometry,
    angle_grid,
    db_to_linear,
    dbm_to_watts,
    steering_rx,
    steering_tx,
    watts_to_dbm,
)
from src.core.channel.scenario import (
    PointScatterer,
    Scenario,
    effective_matrix,
    interference_channels,
    normalize_scenario,
)

__all__ = [
    "ArrayGeometry",
    "PointScatterer",
    "Scenario",
    "ScenarioConfig",
    "angle_grid",
    "db_to_linear",
    "dbm_to_watts",
    "effective_matrix",
    "generate_scenario",
    "interference_channels",
    "normalize_scenario",
    "steering_rx",
    "steering_tx",
    "watts_to_dbm",
]
