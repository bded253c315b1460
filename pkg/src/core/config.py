"""Application configuration."""

from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings."""

    # Application
    APP_NAME: str = "fdisac"
    APP_VERSION: str = "0.1.0"
    LOG_LEVEL: str = "INFO"

    # Conic solver
    SOLVER_NAME: str = "CLARABEL"
    SOLVER_FEAS_TOL: float = 1e-8
    SOLVER_GAP_TOL: float = 1e-8
    SOLVER_MAX_ITERS: int = 200
    ACCEPT_TOL: float = 1e-6  # residual/cone check applied to "optimal" answers

    # Successive convex approximation
    SCA_EPSILON: float = 1e-4
    SCA_MAX_ITERS: int = 100
    RESTORATION_MAX_ITERS: int = 30
    RESTORATION_TOL: float = 1e-7  # total constraint slack accepted as feasible
    RESTORATION_POWER_WEIGHT: float = 1e-6
    POWER_UNIT_W: float = 1e-3  # optimizers work in milliwatts internally
    RANK_TOL: float = 1e-8
    PSD_TOL: float = 1e-9  # relative eigenvalue floor for covariances
    COND_LIMIT: float = 1e12
    RADAR_GAIN_FLOOR: float = 1e-12  # lower bound on a_t^H Qbar a_t

    # Experiments
    OUTPUT_PATH: Path = Path("./results")
    MAX_WORKERS: int = 4
    DEFAULT_TRIALS: int = 50
    RECORD_TIMING: bool = True
    BEAMPATTERN_POINTS: int = 721
    MAIN_LOBE_TOL_DB: float = 0.1  # gain drop from the grid peak still counted as the peak

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="FDISAC_",
        case_sensitive=True,
        extra="ignore",  # Ignore extra environment variables
    )


settings = Settings()
