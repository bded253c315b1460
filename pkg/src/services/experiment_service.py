"""Seeded Monte Carlo experiments over channel realizations."""

import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from tqdm import tqdm

from src.core.beamforming.sinr import beampattern_gain_db, main_lobe_at
from src.core.channel.generator import ScenarioConfig, generate_scenario
from src.core.channel.geometry import angle_grid, db_to_linear
from src.core.config import settings
from src.core.exceptions import InfeasibleError, IterationLimitError, SolverStallError
from src.core.optim.benchmarks import (
    HdResult,
    comm_only_power_min,
    comm_only_rate_max,
    hd_power_min,
    hd_rate_max,
)
from src.core.optim.common import ScaOptions
from src.core.optim.power_min import PowerMinSpec, sca_power_min
from src.core.optim.rate_max import RateMaxResult, RateMaxSpec, sca_rate_max
from src.core.optim.special_case import ao_special_case
from src.services.detection import roc_table
from src.services.storage import FEASIBLE_STATUSES, ResultStore

logger = logging.getLogger(__name__)

ExperimentKind = Literal[
    "power_min",
    "rate_max",
    "special_case",
    "sweep_tau_rad",
    "sweep_alpha_si",
    "sweep_antennas",
    "beampattern",
    "roc",
    "convergence",
]
Scheme = Literal["fd", "hd", "comm_only", "ao", "all"]

DEFAULT_GRIDS: Dict[str, List[float]] = {
    "sweep_tau_rad": [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
    "sweep_alpha_si": [-130.0, -120.0, -110.0, -100.0, -90.0],
    "sweep_antennas": [4.0, 6.0, 8.0, 10.0, 12.0],
}
SWEEP_KINDS = tuple(DEFAULT_GRIDS)


class ExperimentConfig(BaseModel):
    """Everything one experiment run needs; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    kind: ExperimentKind = "power_min"
    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig)
    trials: int = Field(default_factory=lambda: settings.DEFAULT_TRIALS, ge=1)
    grid: List[float] = Field(default_factory=list)
    tau_rad_db: float = 6.0
    tau_ul_db: float = 5.0
    tau_dl_db: float = 8.0
    scheme: Scheme = "fd"
    epsilon: float = Field(default_factory=lambda: settings.SCA_EPSILON, gt=0)
    max_iters: int = Field(default_factory=lambda: settings.SCA_MAX_ITERS, ge=1)
    out_dir: Path = Field(default_factory=lambda: settings.OUTPUT_PATH)
    workers: int = Field(default_factory=lambda: settings.MAX_WORKERS, ge=1)
    record_timing: bool = Field(default_factory=lambda: settings.RECORD_TIMING)

    # kind-specific knobs
    convergence_users: List[int] = Field(default_factory=lambda: [1, 2, 3])
    beampattern_method: Literal["power_min", "rate_max"] = "power_min"
    beampattern_points: int = Field(default_factory=lambda: settings.BEAMPATTERN_POINTS, ge=3)
    roc_sinr_db: List[float] = Field(default_factory=lambda: [-5.0, 0.0, 5.0, 10.0, 15.0])
    roc_p_fa: List[float] = Field(default_factory=lambda: [10.0 ** e for e in range(-8, 0)])

    @field_validator("grid")
    @classmethod
    def _strictly_monotone(cls, v: List[float]) -> List[float]:
        diffs = np.diff(v)
        if len(v) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValueError("sweep grid must be strictly monotone")
        return v

    @field_validator("convergence_users")
    @classmethod
    def _positive_users(cls, v: List[int]) -> List[int]:
        if not v or min(v) < 1:
            raise ValueError("convergence_users needs at least one positive user count")
        return v

    @model_validator(mode="after")
    def _fill_grid(self) -> "ExperimentConfig":
        if self.kind in SWEEP_KINDS and not self.grid:
            self.grid = list(DEFAULT_GRIDS[self.kind])
        if self.kind == "sweep_antennas" and any(g < 1 or g != int(g) for g in self.grid):
            raise ValueError("antenna sweep values must be positive integers")
        if self.scheme == "ao" and (_family(self.kind) != "power_min" or self.scenario.users.l):
            raise ValueError("the ao scheme needs a power minimization experiment without downlink users")
        return self

    def sca_options(self) -> ScaOptions:
        return ScaOptions(epsilon=self.epsilon, max_iters=self.max_iters)

    @property
    def prefix(self) -> str:
        return self.kind


@dataclass
class RunRecord:
    """One row per (sweep point, trial, scheme)."""
    sweep_value: float
    trial: int
    seed: int
    scheme: str
    status: str
    objective: float = float("nan")
    radar_slack: float = float("nan")
    min_ul_slack: float = float("nan")
    min_dl_slack: float = float("nan")
    iterations: int = 0
    wall_time_ms: float = 0.0
    solve_ms: float = 0.0


@dataclass
class _Job:
    """A scheme to run on one trial's scenario and how to read its result."""
    scheme: str
    run: Callable[[], Any]
    objective: Callable[[Any], float]


def _trial_config(config: ExperimentConfig, sweep_value: float, trial: int) -> Tuple[ScenarioConfig, Dict[str, float]]:
    """Scenario config and linear thresholds of one (sweep point, trial)."""
    scenario = config.scenario.model_copy(deep=True)
    scenario.seed = config.scenario.seed + trial
    taus = {"rad": config.tau_rad_db, "ul": config.tau_ul_db, "dl": config.tau_dl_db}
    if config.kind == "sweep_tau_rad":
        taus["rad"] = sweep_value
    elif config.kind == "sweep_alpha_si":
        scenario.si.alpha_db = sweep_value
    elif config.kind == "sweep_antennas":
        scenario.geometry.n_tx = scenario.geometry.n_rx = int(sweep_value)
    elif config.kind == "convergence":
        scenario.users.k = scenario.users.l = int(sweep_value)
    return scenario, {key: db_to_linear(value) for key, value in taus.items()}


def _total_power(result) -> float:
    return result.tx.total_power


def _sum_rate(result) -> float:
    return result.sum_rate


def _schemes(config: ExperimentConfig, family: str) -> List[str]:
    if family == "special_case":
        return ["sca", "ao"]
    if family == "convergence":
        return ["sca", "rate_sca"]
    if config.scheme != "all":
        return [config.scheme]
    ao = ["ao"] if family == "power_min" and config.scenario.users.l == 0 else []
    return ["fd", "hd", "comm_only"] + ao


def _family(kind: str) -> str:
    return {
        "sweep_tau_rad": "power_min",
        "sweep_antennas": "power_min",
        "sweep_alpha_si": "rate_max",
        "beampattern": "power_min",
    }.get(kind, kind)


def _jobs(config: ExperimentConfig, scenario_config: ScenarioConfig, taus: Dict[str, float]) -> List[_Job]:
    scenario = generate_scenario(scenario_config)
    opts = config.sca_options()
    tau_rad, tau_ul, tau_dl = taus["rad"], taus["ul"], taus["dl"]
    family = _family(config.kind)
    power = PowerMinSpec.uniform(scenario, tau_rad, tau_ul, tau_dl)
    rate = RateMaxSpec(scenario, tau_rad)

    table: Dict[str, Dict[str, _Job]] = {
        "power_min": {
            "fd": _Job("fd", lambda: sca_power_min(power, opts), _total_power),
            "comm_only": _Job("comm_only", lambda: comm_only_power_min(power, opts), _total_power),
            "hd": _Job("hd", lambda: hd_power_min(scenario, tau_rad, tau_dl, tau_ul, opts), lambda r: r.p_avg),
            "ao": _Job("ao", lambda: ao_special_case(scenario, tau_rad, power.tau_ul, opts), _total_power),
        },
        "rate_max": {
            "fd": _Job("fd", lambda: sca_rate_max(rate, opts), _sum_rate),
            "comm_only": _Job("comm_only", lambda: comm_only_rate_max(rate, opts), _sum_rate),
            "hd": _Job("hd", lambda: hd_rate_max(scenario, tau_rad, opts), lambda r: r.r_avg),
        },
    }
    if family == "special_case":
        ul_only = scenario.without_downlink()
        spec = PowerMinSpec.uniform(ul_only, tau_rad, tau_ul, tau_dl)
        return [
            _Job("sca", lambda: sca_power_min(spec, opts), _total_power),
            _Job("ao", lambda: ao_special_case(ul_only, tau_rad, spec.tau_ul, opts), _total_power),
        ]
    if family == "convergence":
        return [
            _Job("sca", table["power_min"]["fd"].run, _total_power),
            _Job("rate_sca", table["rate_max"]["fd"].run, _sum_rate),
        ]
    return [table[family][scheme] for scheme in _schemes(config, family)]


def _record(job: _Job, config: ExperimentConfig, sweep_value: float, trial: int, seed: int,
            taus: Dict[str, float]) -> Tuple[RunRecord, List[Dict[str, Any]]]:
    record = RunRecord(sweep_value, trial, seed, job.scheme, "ok")
    started = time.perf_counter()
    try:
        result = job.run()
    except IterationLimitError as exc:
        result, record.status = exc.result, "iteration_limit"
        logger.warning(f"Trial {trial} ({job.scheme}) hit the iteration cap")
    except InfeasibleError as exc:
        record.status = "infeasible"
        logger.warning(f"Trial {trial} ({job.scheme}) infeasible: {exc}")
        result = None
    except SolverStallError as exc:
        record.status, record.iterations = "stalled", exc.iterations
        logger.warning(f"Trial {trial} ({job.scheme}) stalled: {exc}")
        result = None
    except Exception as exc:
        record.status = "error"
        logger.error(f"Trial {trial} ({job.scheme}) failed: {exc}")
        result = None
    record.wall_time_ms = (time.perf_counter() - started) * 1e3
    if result is None:
        return record, []

    record.objective = float(job.objective(result))
    trace: List[Dict[str, Any]] = []
    if isinstance(result, HdResult):
        record.iterations = result.iterations
        record.solve_ms = record.wall_time_ms
    else:
        slacks = result.report.slacks(
            None if job.scheme == "comm_only" else taus["rad"],
            None if isinstance(result, RateMaxResult) else np.full(result.report.uplink.size, taus["ul"]),
            None if isinstance(result, RateMaxResult) else np.full(result.report.downlink.size, taus["dl"]),
        )
        record.radar_slack = slacks["radar_slack"]
        record.min_ul_slack = slacks["min_ul_slack"]
        record.min_dl_slack = slacks["min_dl_slack"]
        record.iterations = result.state.iteration
        record.solve_ms = float(sum(row["solve_ms"] for row in result.state.trace))
        trace = [{"sweep_value": sweep_value, "trial": trial, "scheme": job.scheme, **row} for row in result.state.trace]
    return record, trace


def run_trial(config: ExperimentConfig, sweep_value: float, trial: int) -> Tuple[List[Dict[str, Any]], List[Dict[str, Any]]]:
    """All schemes of one (sweep point, trial); returns (records, trace rows)."""
    scenario_config, taus = _trial_config(config, sweep_value, trial)
    records, traces = [], []
    for job in _jobs(config, scenario_config, taus):
        record, trace = _record(job, config, sweep_value, trial, scenario_config.seed, taus)
        records.append(asdict(record))
        traces.extend(trace)
    return records, traces


def _sweep_points(config: ExperimentConfig) -> List[float]:
    if config.kind in SWEEP_KINDS:
        return list(config.grid)
    if config.kind == "convergence":
        return [float(n) for n in config.convergence_users]
    return [0.0]


def _run_trials(config: ExperimentConfig, n_trials: int) -> Tuple[pd.DataFrame, List[Dict[str, Any]]]:
    tasks = [(value, trial) for value in _sweep_points(config) for trial in range(n_trials)]
    records: List[Dict[str, Any]] = []
    traces: List[Dict[str, Any]] = []
    progress = tqdm(total=len(tasks), desc=config.kind, unit="trial", leave=False)
    if config.workers == 1:
        for value, trial in tasks:
            rows, trace = run_trial(config, value, trial)
            records.extend(rows)
            traces.extend(trace)
            progress.update(1)
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(run_trial, config, value, trial) for value, trial in tasks]
            for future in as_completed(futures):
                rows, trace = future.result()
                records.extend(rows)
                traces.extend(trace)
                progress.update(1)
    progress.close()
    traces.sort(key=lambda row: (row["sweep_value"], row["trial"], row["scheme"], row["iter"]))
    return pd.DataFrame(records, columns=list(RunRecord.__dataclass_fields__)), traces


def _beampattern(config: ExperimentConfig, store: ResultStore) -> Dict[str, Path]:
    """Beampattern of the design for the base seed, main lobe expected at the target."""
    scenario_config, taus = _trial_config(config, 0.0, 0)
    scenario = generate_scenario(scenario_config)
    opts = config.sca_options()
    try:
        if config.beampattern_method == "rate_max":
            result = sca_rate_max(RateMaxSpec(scenario, taus["rad"]), opts)
        else:
            result = sca_power_min(PowerMinSpec.uniform(scenario, taus["rad"], taus["ul"], taus["dl"]), opts)
    except IterationLimitError as exc:
        logger.warning("Beampattern design hit the iteration cap; plotting the best iterate")
        result = exc.result
    grid = angle_grid(config.beampattern_points)
    gains_db = beampattern_gain_db(result.tx, result.rx, scenario, grid)
    if main_lobe_at(grid, gains_db, scenario.target.angle_deg):
        logger.info(f"Main lobe on the target at {scenario.target.angle_deg:g} deg")
    else:
        logger.warning(f"Beampattern peak at {grid[np.argmax(gains_db)]:g} deg, away from the target")
    return {"beampattern": store.save_beampattern(grid, {config.beampattern_method: gains_db}, config.prefix)}


def run_experiment(config: ExperimentConfig) -> Dict[str, Path]:
    """Run the configured experiment and write its tables; returns the files written."""
    store = ResultStore(config.out_dir, config.record_timing)
    written = {"config": store.save_config(config, config.prefix)}
    logger.info(f"Starting {config.kind} experiment: {config.trials} trials, seed {config.scenario.seed}")

    if config.kind == "roc":
        written["roc"] = store.save_roc(roc_table(config.roc_sinr_db, config.roc_p_fa), config.prefix)
        return written
    if config.kind == "beampattern":
        written.update(_beampattern(config, store))
        return written

    records, traces = _run_trials(config, config.trials)
    written["records"] = store.save_records(records, config.prefix)
    written["summary"] = store.save_summary(records, config.prefix)
    if traces and config.kind not in SWEEP_KINDS:
        written["trace"] = store.save_trace(traces, config.prefix)

    failed = int((~records["status"].isin(FEASIBLE_STATUSES)).sum())
    logger.info(f"Finished {config.kind}: {len(records)} runs, {failed} infeasible or failed")
    return written
