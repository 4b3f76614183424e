"""
Narrow Escape Kit - batch front end

Subcommands:
    constants     escape-time expansion terms per (eps, a)
    operators     elliptic constant and disk double integrals per aspect ratio
    compare       averaged asymptotic sojourn time against Monte Carlo
    kernel        singular Green-kernel terms along a boundary geodesic
    mc-calibrate  fully absorbing sphere sanity runs

Batch use only; every run writes CSV tables, optional JSON-lines Monte Carlo
records and a manifest.json into the output directory.
"""
import sys
import os

sys.path.append(os.path.abspath(os.path.dirname(__file__)))

import argparse
import logging
from typing import Dict, List, Optional

from src.data_loader import ExperimentConfig, load_config
from src.errors import ConfigError, NarrowEscapeError
from src.experiments import (
    calibration_table,
    compare_table,
    constants_table,
    kernel_table,
    operators_table,
    save_tables,
)
from src.green_kernel import SignConvention
from src.utils import append_jsonl, resolve_threads, utc_timestamp, write_manifest

logger = logging.getLogger(__name__)

SIGN_CONVENTIONS = {
    "theorem": SignConvention.PLUS,
    "section4": SignConvention.MINUS,
    "plus": SignConvention.PLUS,
    "minus": SignConvention.MINUS,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="narrow-escape",
        description="Narrow escape asymptotics and Monte Carlo checks (batch only, no interactive UI).",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides outputs.directory)")
    common.add_argument("--seed", type=int, metavar="U64", help="Monte Carlo seed (overrides mc.seed)")
    common.add_argument("--threads", type=int, metavar="N", help="worker threads (fallback: NEK_THREADS)")
    common.add_argument("--order-doubled", action="store_true", help="recheck disk quadratures at doubled order")
    common.add_argument(
        "--sign-convention",
        choices=list(SIGN_CONVENTIONS),
        default="theorem",
        help="theorem (alias plus): H + d_nu phi; section4 (alias minus): H - d_nu phi",
    )
    common.add_argument("--verbose", action="store_true", help="debug logging")
    common.add_argument("--no-progress", action="store_true", help="hide Monte Carlo progress bars")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("constants", parents=[common], help="expansion terms per (eps, a)")
    operators = sub.add_parser("operators", parents=[common], help="disk operator diagnostics")
    operators.add_argument("--a", type=float, nargs="+", metavar="A", help="aspect ratios (default: window.a)")
    sub.add_parser("compare", parents=[common], help="asymptotics against Monte Carlo")
    sub.add_parser("kernel", parents=[common], help="singular kernel terms along a geodesic")
    sub.add_parser("mc-calibrate", parents=[common], help="fully absorbing sphere runs")
    return parser


def _load(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        config = load_config(args.config)
        raw = config.raw
    else:
        raw = {}
    overrides: Dict = {}
    if getattr(args, "a", None):
        overrides["window"] = {"a": list(args.a)}
    if args.seed is not None:
        overrides["mc"] = {"seed": args.seed}
    if args.out:
        overrides["outputs"] = {"directory": args.out}
    if not overrides and args.config:
        return config
    for section, values in overrides.items():
        raw = {**raw, section: {**raw.get(section, {}), **values}}
    return ExperimentConfig(raw=load_config(raw).raw, source=args.config)


def run(args: argparse.Namespace) -> int:
    started = utc_timestamp()
    config = _load(args)
    outputs_cfg = config.section("outputs")
    output_dir = outputs_cfg["directory"]
    formats = outputs_cfg["formats"]
    workers = resolve_threads(args.threads)
    sign_convention = SIGN_CONVENTIONS[args.sign_convention]
    progress = not args.no_progress
    seed = int(config.section("mc")["seed"])
    logger.info(f"Running '{args.command}' with {workers} thread(s), output to {output_dir}")

    records: List[Dict] = []
    seeds: List[int] = []
    if args.command == "constants":
        tables = {"constants": constants_table(config, sign_convention, args.order_doubled, workers)}
    elif args.command == "operators":
        tables = {"operators": operators_table(config.a_list, args.order_doubled, workers)}
    elif args.command == "compare":
        df, records = compare_table(config, sign_convention, seed, workers, progress)
        tables, seeds = {"compare": df}, [seed]
    elif args.command == "kernel":
        tables = {"kernel": kernel_table(config, sign_convention)}
    else:
        df, records = calibration_table(config, seed, workers, progress)
        tables, seeds = {"mc_calibrate": df}, [seed]

    outputs = save_tables(tables, output_dir) if "csv" in formats else []
    if records and "jsonl" in formats:
        jsonl_path = os.path.join(output_dir, f"{args.command.replace('-', '_')}_records.jsonl")
        if os.path.exists(jsonl_path):
            os.remove(jsonl_path)
        outputs.append(append_jsonl(records, jsonl_path))
    os.makedirs(output_dir, exist_ok=True)
    write_manifest(output_dir, config.raw, outputs, seeds, started, command=args.command)
    for name, df in tables.items():
        flagged = (df["reason"].fillna("") != "").sum() if "reason" in df else 0
        if flagged:
            logger.warning(f"{name}: {flagged} row(s) carry a reason")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the process exit status."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return run(args)
    except ConfigError as exc:
        logger.error(f"Invalid configuration: {exc}")
        return 2
    except (NarrowEscapeError, OSError) as exc:
        logger.error(f"{args.command} failed: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
