"""
Command-line front end

    entangleometer simulate|fit|characterize|table1 --config <path>
        [--seed N] [--out DIR] [--workers N] [--sensitivity] [--override-validity]

Exit codes: 0 success, 2 configuration error, 3 degenerate data,
4 non-convergence. Errors are printed on stderr as one JSON object.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Type, TypeVar

from pydantic import BaseModel, ValidationError

from entangleometer import __version__
from entangleometer.config import SCHEMA_VERSION, get_settings, setup_logging
from entangleometer.models.schemas import (
    CharacterizeConfig,
    ExperimentConfig,
    FitCommandConfig,
    Table1Bundle,
)
from entangleometer.services.detection import load_dataset
from entangleometer.services.errors import EntangleometerException, InvalidConfigException
from entangleometer.services.experiment_service import CommandOutput, ExperimentService

logger = logging.getLogger(__name__)

ConfigT = TypeVar("ConfigT", bound=BaseModel)


def load_config(path: Optional[str], model: Type[ConfigT], required: bool = True) -> ConfigT:
    """Parse and validate a JSON config file"""
    if path is None:
        if required:
            raise InvalidConfigException("--config is required")
        return model()
    config_path = Path(path)
    if not config_path.is_file():
        raise InvalidConfigException(f"config file not found: {config_path}")
    try:
        return model.model_validate_json(config_path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise InvalidConfigException(f"{config_path.name}: {e}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entangleometer",
        description="Entanglement-enabled ellipsometer simulator with a classical PSA baseline",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser, config_help: str) -> None:
        sub.add_argument("--config", help=config_help)
        sub.add_argument("--out", type=Path, default=None, help="output directory (default: settings output_dir)")
        sub.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")

    simulate = commands.add_parser("simulate", help="simulate sweep datasets")
    common(simulate, "ExperimentConfig JSON")
    simulate.add_argument("--seed", type=int, default=None)
    simulate.add_argument("--workers", type=int, default=None)
    simulate.add_argument("--override-validity", action="store_true",
                          help="allow sweeps that cannot depend on the retardance")

    fit = commands.add_parser("fit", help="fit a dataset")
    common(fit, "FitCommandConfig JSON (optional)")
    fit.add_argument("--dataset", required=True, help="dataset CSV; the JSON sidecar must sit next to it")
    fit.add_argument("--sensitivity", action="store_true", help="run the initial-scale sensitivity scan")
    fit.add_argument("--delta-std", type=float, default=None, help="reference retardance for the relative error")

    characterize = commands.add_parser("characterize", help="source characterization suite")
    common(characterize, "CharacterizeConfig JSON (optional)")
    characterize.add_argument("--seed", type=int, default=None)

    table1 = commands.add_parser("table1", help="quantum vs classical comparison table")
    common(table1, "Table1Bundle JSON (optional)")
    table1.add_argument("--seed", type=int, default=None)
    table1.add_argument("--workers", type=int, default=None)
    return parser


def run_command(args: argparse.Namespace) -> CommandOutput:
    settings = get_settings()
    service = ExperimentService(workers=getattr(args, "workers", None) or settings.workers)

    if args.command == "simulate":
        config = load_config(args.config, ExperimentConfig)
        return service.simulate(config, seed=args.seed, override_validity=args.override_validity)
    if args.command == "fit":
        config = load_config(args.config, FitCommandConfig, required=False)
        dataset = load_dataset(args.dataset)
        return service.fit(dataset, config, sensitivity=args.sensitivity, delta_std=args.delta_std)
    if args.command == "characterize":
        config = load_config(args.config, CharacterizeConfig, required=False)
        return service.characterize(config, seed=args.seed)
    config = load_config(args.config, Table1Bundle, required=False)
    return service.table1(config, seed=args.seed)


def report_error(error: EntangleometerException) -> int:
    payload = error.to_dict()
    payload["schema_version"] = SCHEMA_VERSION
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return error.exit_code


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    out_dir = args.out or get_settings().output_dir

    logger.debug("Running %s with output directory %s", args.command, out_dir)
    try:
        output = run_command(args)
        written = output.write(out_dir)
    except EntangleometerException as e:
        return report_error(e)
    except ValidationError as e:
        return report_error(InvalidConfigException(str(e)))
    except OSError as e:
        return report_error(InvalidConfigException(str(e)))

    print(json.dumps({
        "command": args.command,
        "out": str(out_dir),
        "files": sorted(path.name for path in written),
    }, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
