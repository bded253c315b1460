"""Result storage: CSV tables and config snapshots of experiment runs."""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.core.config import settings

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.9g"

SUMMARY_COLUMNS = [
    "sweep_value",
    "scheme",
    "mean_objective",
    "feasibility_rate",
    "mean_iters",
    "mean_solve_ms",
    "n_trials",
    "n_feasible",
    "note",
]
FEASIBLE_STATUSES = ("ok", "iteration_limit")
TIMING_COLUMNS = ("wall_time_ms", "solve_ms", "mean_solve_ms")


def summarize(records: pd.DataFrame) -> pd.DataFrame:
    """Means over feasible trials per (sweep_value, scheme).

    Infeasible or failed trials count toward `n_trials` and lower the
    feasibility rate; they never enter the means.
    """
    rows: List[Dict[str, Any]] = []
    if records.empty:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)
    for (sweep_value, scheme), group in records.groupby(["sweep_value", "scheme"], sort=True):
        ok = group[group["status"].isin(FEASIBLE_STATUSES)]
        n_trials, n_feasible = len(group), len(ok)
        rate = n_feasible / n_trials
        rows.append({
            "sweep_value": sweep_value,
            "scheme": scheme,
            "mean_objective": ok["objective"].mean() if n_feasible else float("nan"),
            "feasibility_rate": rate,
            "mean_iters": ok["iterations"].mean() if n_feasible else float("nan"),
            "mean_solve_ms": ok["solve_ms"].mean() if n_feasible else float("nan"),
            "n_trials": n_trials,
            "n_feasible": n_feasible,
            "note": "" if rate == 1.0 else f"{n_trials - n_feasible} infeasible or failed",
        })
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


class ResultStore:
    """Writes the tables of one experiment into an output directory."""

    def __init__(self, out_dir: Optional[Path] = None, record_timing: Optional[bool] = None):
        self.out_dir = Path(out_dir or settings.OUTPUT_PATH)
        self.record_timing = settings.RECORD_TIMING if record_timing is None else record_timing
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def _write(self, frame: pd.DataFrame, name: str) -> Path:
        if not self.record_timing:
            frame = frame.copy()
            for column in TIMING_COLUMNS:
                if column in frame.columns:
                    frame[column] = 0.0
        path = self.out_dir / name
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        logger.info(f"Wrote {len(frame)} rows to {path}")
        return path

    def save_records(self, records: pd.DataFrame, prefix: str) -> Path:
        records = records.sort_values(["sweep_value", "scheme", "trial"], kind="mergesort")
        return self._write(records.reset_index(drop=True), f"{prefix}_records.csv")

    def save_summary(self, records: pd.DataFrame, prefix: str) -> Path:
        return self._write(summarize(records), f"{prefix}_summary.csv")

    def save_trace(self, rows: Iterable[Dict[str, Any]], prefix: str) -> Path:
        """Per-iteration optimizer traces (one CSV for all runs of the experiment)."""
        return self._write(pd.DataFrame(list(rows)), f"{prefix}_trace.csv")

    def save_beampattern(self, angles_deg: Sequence[float], gains_db: Dict[str, np.ndarray], prefix: str) -> Path:
        frame = pd.DataFrame({"angle_deg": np.asarray(angles_deg, dtype=float)})
        for label, gains in gains_db.items():
            column = "gain_db" if len(gains_db) == 1 else f"gain_db_{label}"
            frame[column] = np.asarray(gains, dtype=float)
        return self._write(frame, f"{prefix}_beampattern.csv")

    def save_roc(self, table: pd.DataFrame, prefix: str) -> Path:
        return self._write(table, f"{prefix}_roc.csv")

    def save_config(self, config: Any, prefix: str) -> Path:
        """JSON snapshot of the configuration that produced the tables."""
        payload = config.model_dump(mode="json") if hasattr(config, "model_dump") else config
        path = self.out_dir / f"{prefix}_config.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path
