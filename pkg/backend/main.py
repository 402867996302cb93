"""
aggsolve command line

Subcommands:
  build   build one finite game from a config and write it back as a config with a game section
  sweep   build / solve / measure over a list of ν and write one CSV row per ν
  verify  run the monotonicity, uniqueness, oracle and constant checks and print a JSON report

Exit codes: 0 success, 1 usage or config error, 2 solver failure, 3 oracle failure.
"""

import argparse
import asyncio
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import structlog
from dotenv import load_dotenv

from agents.aas_builder import AASBuilder
from agents.coordinator import SweepCoordinator, oracle_failed
from models.schemas import AASMethod, GameConfig, SolveMode, SolverConfig
from utils.config_loader import config_with_game, load_config, spec_from_config, write_config
from utils.errors import AggSolveError, ConfigError, WitnessError
from utils.logging_config import configure_logging
from utils.metrics import compute_constants, compute_metrics
from utils.plotting import plot_sweep

logger = structlog.get_logger(__name__)

CSV_FLOAT_FORMAT = "%.17g"


class CliArgumentParser(argparse.ArgumentParser):
    """argparse that reports usage errors as ConfigError instead of exiting"""

    def error(self, message: str):
        raise ConfigError(f"{self.prog}: {message}")


def _int_list(text: str) -> List[int]:
    values = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            values.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer: {part!r}")
    return values


def build_parser() -> CliArgumentParser:
    parser = CliArgumentParser(prog="aggsolve", description="Finite approximations of nonatomic aggregative games")
    parser.add_argument("--log-level", default=None, help="Override AGGSOLVE_LOG_LEVEL")
    parser.add_argument("--json-logs", action="store_true", default=None, help="Render logs as JSON lines")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliArgumentParser)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, type=Path, help="Game config (YAML)")

    def add_solver(p: argparse.ArgumentParser) -> None:
        p.add_argument("--mode", choices=[m.value for m in SolveMode], default=None)
        p.add_argument("--tol", type=float, default=None, help="Natural-residual threshold")
        p.add_argument("--max-iters", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)

    build = sub.add_parser("build", help="Build one finite game")
    add_common(build)
    build.add_argument("--nu", type=int, required=True)
    build.add_argument("--method", choices=[m.value for m in AASMethod], default=None)
    build.add_argument("--out", type=Path, required=True, help="Where to write the config with its game section")

    sweep = sub.add_parser("sweep", help="Run a convergence sweep")
    add_common(sweep)
    sweep.add_argument("--nus", type=_int_list, default=None, help="Comma-separated ν values, e.g. 2,4,8")
    sweep.add_argument("--method", choices=[m.value for m in AASMethod], default=None)
    add_solver(sweep)
    sweep.add_argument("--out", type=Path, required=True, help="CSV output path")
    sweep.add_argument("--plot", type=Path, default=None, help="Optional PNG with log-log error curves")

    verify = sub.add_parser("verify", help="Check the game's structural properties")
    add_common(verify)
    add_solver(verify)
    verify.add_argument("--out", type=Path, default=None, help="Also write the JSON report here")
    return parser


def solver_overrides(config: GameConfig, args: argparse.Namespace) -> SolverConfig:
    update: Dict[str, Any] = {}
    if getattr(args, "mode", None) is not None:
        update["mode"] = SolveMode(args.mode)
    if getattr(args, "tol", None) is not None:
        update["tol"] = args.tol
    if getattr(args, "max_iters", None) is not None:
        update["max_iters"] = args.max_iters
    if getattr(args, "seed", None) is not None:
        update["seed"] = args.seed
    if not update:
        return config.solver
    try:
        return SolverConfig.model_validate({**config.solver.model_dump(), **update})
    except ValueError as e:
        raise ConfigError(f"invalid solver override: {e}") from e


def cmd_build(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    spec = spec_from_config(config)
    method = AASMethod(args.method or config.sweep.method)
    if args.nu < 1:
        raise ConfigError("--nu must be >= 1", nu=args.nu)

    game = AASBuilder(spec).build(args.nu, method, config.sweep.add_theta_axis)
    write_config(config_with_game(config, game), args.out)

    summary: Dict[str, Any] = game.summary()
    try:
        constants = compute_constants(spec)
    except WitnessError as e:
        logger.warning("constants uncertified", reason=e.message)
        constants = None
    summary.update(compute_metrics(spec, game, constants).as_dict())
    summary["out"] = str(args.out)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    solver = solver_overrides(config, args)
    coordinator = SweepCoordinator(config)
    rows = asyncio.run(coordinator.run_sweep(nus=args.nus, method=args.method, solver=solver))
    rows.to_csv(args.out, index=False, float_format=CSV_FLOAT_FORMAT)
    logger.info("sweep written", path=str(args.out), rows=len(rows))

    if args.plot is not None:
        plot_sweep(rows, args.plot, title=config.name)

    if len(rows) and (rows["status"] != "ok").all():
        logger.error("every sweep row failed", statuses=sorted(set(rows["status"])))
        return 2
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    config = config.model_copy(update={"solver": solver_overrides(config, args)})
    report = asyncio.run(SweepCoordinator(config).run_verify())

    payload = report.model_dump_json(indent=2)
    print(payload)
    if args.out is not None:
        Path(args.out).write_text(payload, encoding="utf-8")

    if oracle_failed(report):
        return 3
    return 0 if report.passed else 2


COMMANDS = {"build": cmd_build, "sweep": cmd_sweep, "verify": cmd_verify}


def main(argv: Optional[Sequence[str]] = None) -> int:
    # Load environment variables
    load_dotenv()
    try:
        args = build_parser().parse_args(argv)
        configure_logging(args.log_level, args.json_logs)
        return COMMANDS[args.command](args)
    except AggSolveError as e:
        print(json.dumps(e.to_dict()), file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
