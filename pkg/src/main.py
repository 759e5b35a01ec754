"""
Finite-Speed Consensus Engine

Command-line entry point. Every verb takes one run configuration file;
flags only override single fields of it.

    python -m src.main run configs/five_agents_1d.toml
    python -m src.main compare configs/symmetric_pair.toml --schemes euler heun picard
    python -m src.main validate configs/random_2d.toml
    python -m src.main gen-scenario configs/random_2d.toml
"""

import argparse
import asyncio
import json
import sys
from pathlib import Path
from typing import List, Optional

from src.config import settings
from src.core.exceptions import (
    AuditFailure,
    ConfigValidationError,
    DomainError,
    InfluenceRejectedError,
    SimulationError,
)
from src.core.logging import setup_logging, get_logger
from src.schemas.config import RunConfig, apply_overrides, load_run_config
from src.services.runner import get_simulation_service
from src.simulation.integrator import Scheme

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_AUDIT = 3
EXIT_FAULT = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="consensus",
        description=f"{settings.app_name} v{settings.app_version}"
    )
    parser.add_argument("--log-level", default=None, help="Override LOG_LEVEL")
    sub = parser.add_subparsers(dest="verb", required=True)

    schemes = [s.value for s in Scheme]
    for verb, help_text in (
        ("run", "Run one scheme with audits and write its artifacts"),
        ("compare", "Run several schemes on one datum and report their gaps"),
        ("validate", "Validate the configuration and certify psi"),
        ("gen-scenario", "Build the configured datum and save it as a datum file"),
    ):
        p = sub.add_parser(verb, help=help_text)
        p.add_argument("config", type=Path, help="Run configuration (.toml or .json)")
        p.add_argument("--dt", type=float, help="Step size")
        p.add_argument("--T", type=float, dest="T", help="Horizon")
        p.add_argument("--scheme", choices=schemes, help="Integration scheme")
        p.add_argument("--seed", type=int, help="Scenario seed")
        p.add_argument("--out-dir", help="Directory for every artifact")
        if verb == "compare":
            p.add_argument(
                "--schemes", nargs="+", choices=schemes, default=["euler", "heun", "picard"],
                help="Schemes to compare (at least two)"
            )
        if verb == "gen-scenario":
            p.add_argument("--output", type=Path, help="Datum file path (default <out_dir>/datum.csv)")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    config = load_run_config(args.config)
    return apply_overrides(
        config, dt=args.dt, T=args.T, scheme=args.scheme, seed=args.seed, out_dir=args.out_dir
    )


def dispatch(args: argparse.Namespace) -> int:
    service = get_simulation_service()
    config = load_config(args)

    if args.verb == "validate":
        prepared = service.validate(config)
        cert = prepared.decay
        print(json.dumps({
            "name": config.name,
            "config_hash": config.config_hash(),
            "s": prepared.certification.s,
            "c": config.model.c,
            "r_max": prepared.certification.r_max,
            "dt": prepared.dt,
            "R0": prepared.datum.R0,
            "S0": prepared.datum.S0,
            "certificate": {
                "psi_lo": cert.psi_lo, "psi_hi": cert.psi_hi, "lam": cert.lam,
                "condition_met": cert.condition_met, "note": cert.note,
            },
        }, indent=2))
        return EXIT_OK

    if args.verb == "gen-scenario":
        path = service.generate_scenario(config, args.output)
        print(f"Datum written to {path}")
        return EXIT_OK

    if args.verb == "compare":
        report = asyncio.run(service.compare(config, args.schemes))
        print(report.model_dump_json(indent=2))
        return EXIT_OK

    summary = service.run(config)
    print(summary.model_dump_json(indent=2))
    return EXIT_OK if summary.audits_passed else EXIT_AUDIT


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(level=args.log_level or settings.log_level, log_file=settings.log_file)

    try:
        return dispatch(args)
    except ConfigValidationError as e:
        field = e.details.get("field")
        logger.error(f"Invalid configuration{f' ({field})' if field else ''}: {e.message}")
        return EXIT_INVALID
    except (InfluenceRejectedError, DomainError) as e:
        logger.error(f"{e.code}: {e.message}")
        return EXIT_INVALID
    except AuditFailure as e:
        logger.error(f"Audit failed: {e.message}")
        return EXIT_AUDIT
    except SimulationError as e:
        logger.error(f"{e.code}: {e.message}")
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
