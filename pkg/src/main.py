"""fdisac command-line entry point."""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import ValidationError

from src.core.channel.generator import ScenarioConfig
from src.core.config import settings
from src.core.exceptions import ConfigError
from src.services.experiment_service import ExperimentConfig, run_experiment

logger = logging.getLogger(__name__)

COMMANDS = {
    "power-min": "power_min",
    "rate-max": "rate_max",
    "special-case": "special_case",
    "beampattern": "beampattern",
    "roc": "roc",
    "convergence": "convergence",
}
SWEEP_PARAMS = {"tau_rad": "sweep_tau_rad", "alpha_si": "sweep_alpha_si", "antennas": "sweep_antennas"}
VALUE_FLAGS = ("--grid", "--users")


def parse_grid(text: str) -> List[float]:
    """'start:step:stop' (stop included) or a comma-separated list."""
    try:
        if ":" in text:
            start, step, stop = (float(x) for x in text.removesuffix("dB").split(":"))
            if step == 0:
                raise ValueError("zero step")
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            if count < 1:
                raise ValueError("empty range")
            return [float(start + i * step) for i in range(count)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"invalid grid {text!r}: {exc}") from exc


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="ExperimentConfig JSON file")
    parser.add_argument("--seed", type=int, help="base seed (trial t uses seed + t)")
    parser.add_argument("--trials", type=int, help="Monte Carlo trials per sweep point")
    parser.add_argument("--out-dir", type=Path, help="output directory for CSV files")
    parser.add_argument("--epsilon", type=float, help="relative-change stopping threshold")
    parser.add_argument("--max-iters", type=int, help="iteration cap of every optimizer")
    parser.add_argument("--scheme", choices=["fd", "hd", "comm_only", "ao", "all"])
    parser.add_argument("--workers", type=int, help="worker processes (1 runs inline)")
    parser.add_argument("--no-timing", action="store_true", help="write timing columns as 0")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.APP_NAME,
        description="Full-duplex ISAC beamforming experiments",
    )
    parser.add_argument("--log-level", default=settings.LOG_LEVEL,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    for command in COMMANDS:
        _add_run_flags(sub.add_parser(command, help=f"run the {COMMANDS[command]} experiment"))

    sweep = sub.add_parser("sweep", help="sweep one parameter over a grid")
    _add_run_flags(sweep)
    sweep.add_argument("--param", choices=sorted(SWEEP_PARAMS), required=True)
    sweep.add_argument("--grid", help="'start:step:stop' or comma-separated values, e.g. --grid -130:10:-90")

    sub.choices["beampattern"].add_argument("--method", choices=["power_min", "rate_max"])
    sub.choices["convergence"].add_argument("--users", help="comma-separated K = L values")

    sub.add_parser("schema", help="print the ScenarioConfig JSON schema")
    sub.add_parser("default-config", help="print the default ExperimentConfig")
    return parser


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge the optional config file with command-line overrides."""
    data: Dict[str, Any] = {}
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}") from exc

    data["kind"] = SWEEP_PARAMS[args.param] if args.command == "sweep" else COMMANDS[args.command]
    overrides = {
        "trials": args.trials,
        "out_dir": str(args.out_dir) if args.out_dir else None,
        "epsilon": args.epsilon,
        "max_iters": args.max_iters,
        "scheme": args.scheme,
        "workers": args.workers,
    }
    data.update({key: value for key, value in overrides.items() if value is not None})
    if args.no_timing:
        data["record_timing"] = False
    if args.seed is not None:
        data.setdefault("scenario", {})["seed"] = args.seed
    if getattr(args, "grid", None):
        data["grid"] = parse_grid(args.grid)
    if getattr(args, "method", None):
        data["beampattern_method"] = args.method
    if getattr(args, "users", None):
        data["convergence_users"] = [int(v) for v in parse_grid(args.users)]

    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def attach_negative_values(argv: List[str]) -> List[str]:
    """Rewrite `--grid -130:10:-90` as `--grid=-130:10:-90` so argparse keeps the value."""
    out: List[str] = []
    for token in argv:
        if out and out[-1] in VALUE_FLAGS and token.startswith("-") and token[1:2].isdigit():
            out[-1] = f"{out[-1]}={token}"
        else:
            out.append(token)
    return out


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(attach_negative_values(sys.argv[1:] if argv is None else list(argv)))
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    if args.command == "schema":
        print(json.dumps(ScenarioConfig.model_json_schema(), indent=2, sort_keys=True))
        return 0
    if args.command == "default-config":
        print(json.dumps(ExperimentConfig().model_dump(mode="json"), indent=2, sort_keys=True))
        return 0

    try:
        config = build_config(args)
    except ConfigError as exc:
        logger.error(f"Configuration error: {exc}")
        return 2

    written = run_experiment(config)
    for name, path in written.items():
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
