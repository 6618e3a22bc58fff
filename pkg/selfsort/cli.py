"""Command line for the self-improving sorter."""
from __future__ import annotations

import argparse
from collections.abc import Callable, Mapping, Sequence
import csv
import logging
from pathlib import Path
from typing import Any

from . import __version__
from .config import RunConfig, load_config
from .const import (
    BENCH_RUNS_FILE,
    BENCH_SUMMARY_FILE,
    DIAGNOSE_FILE,
    EXIT_ERROR,
    EXIT_OK,
    EXIT_ORACLE_MISMATCH,
    EXIT_VALIDATION,
    FORMAT_CSV,
    INSTANCES_FILE,
    MISMATCH_FILE,
    MODEL_FILE,
    PARTITION_FILE,
    RANKS_FILE,
    REPORT_FORMATS,
    SORT_REPORT_FILE,
    VALIDATION_FILE,
    WORLD_FILE,
)
from .coordinator import SelfSortCoordinator
from .engine.codec import (
    SelfSortCodec,
    dumps,
    load_document,
    load_instances,
    save_document,
    save_instances,
)
from .engine.exceptions import (
    InvalidWorldError,
    OracleMismatchError,
    SelfSortError,
    WorldGenerationError,
)
from .engine.instance_model import Instance, World, draw_instances, validate_world
from .engine.operation import sort_instance
from .engine.po_model import LearnedModel

_LOGGER = logging.getLogger(__name__)

Command = Callable[[argparse.Namespace, RunConfig], int]


def _write_json(data: Mapping[str, Any], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(data), encoding="utf-8")


def _write_csv(rows: Sequence[Mapping[str, Any]], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        if not rows:
            return
        writer = csv.DictWriter(handle, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _load_world(path: Path) -> World:
    return SelfSortCodec.decode_world(load_document(path))


def _load_model(path: Path) -> LearnedModel:
    return SelfSortCodec.decode_model(load_document(path))


def cmd_generate(args: argparse.Namespace, config: RunConfig) -> int:
    """Generate a world, its validation report and optionally a recorded stream."""
    coordinator = SelfSortCoordinator(config)
    world, report = coordinator.generate()
    out = config.output_dir
    save_document(SelfSortCodec.encode_world(world), out / WORLD_FILE)
    _write_json(report.as_dict(), out / VALIDATION_FILE)
    if args.samples:
        save_instances(
            draw_instances(world, args.samples, config.learn_seed), out / INSTANCES_FILE
        )
    if not report.ok:
        return EXIT_VALIDATION
    print(f"World with n={world.n}, g={world.g} written to {out / WORLD_FILE}")
    return EXIT_OK


def cmd_learn(args: argparse.Namespace, config: RunConfig) -> int:
    """Learn partition, V-list and outcome tries; write the model."""
    coordinator = SelfSortCoordinator(config)
    if args.world is not None:
        world = _load_world(args.world)
        report = validate_world(world)
        if not report.ok:
            _LOGGER.error(
                "World %s fails validation: %s", args.world, report.violations
            )
            return EXIT_VALIDATION
        model = coordinator.learn(world=world)
    else:
        model = coordinator.learn(stream=load_instances(args.stream))
    path = config.output_dir / MODEL_FILE
    save_document(SelfSortCodec.encode_model(model), path)
    print(
        f"Model with {len(model.tries)} groups and T={model.samples} written to {path}"
    )
    return EXIT_OK


def cmd_learn_partition(args: argparse.Namespace, config: RunConfig) -> int:
    """Learn only the partition from recorded samples."""
    mu = config.mu if args.mu is None else args.mu
    partition = SelfSortCoordinator(config).learn_partition(
        load_instances(args.samples), mu
    )
    path = config.output_dir / PARTITION_FILE
    save_document(SelfSortCodec.encode_partition(partition), path)
    print(f"{len(partition.groups)} groups written to {path}")
    return EXIT_OK


def cmd_sort(args: argparse.Namespace, config: RunConfig) -> int:
    """Sort one instance with a learned model."""
    model = _load_model(args.model)
    instance: Instance = SelfSortCodec.decode_instance(load_document(args.instance))
    result = sort_instance(model, instance)
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / RANKS_FILE).write_text(
        "".join(f"{r}\n" for r in result.ranks), encoding="utf-8"
    )
    sublists = result.report.bucket_sublists
    _write_json(
        {
            **result.report.as_row(),
            "bucket_sublists": {str(r): c for r, c in sorted(sublists.items())},
        },
        out / SORT_REPORT_FILE,
    )
    print(" ".join(str(r) for r in result.ranks))
    return EXIT_OK


def cmd_bench(args: argparse.Namespace, config: RunConfig) -> int:
    """Benchmark a model on fresh instances of its world."""
    coordinator = SelfSortCoordinator(config)
    result = coordinator.bench(_load_world(args.world), _load_model(args.model))
    out = config.output_dir
    _write_csv([report.as_row() for report in result.reports], out / BENCH_RUNS_FILE)
    _write_json(result.summary.as_dict(), out / BENCH_SUMMARY_FILE)
    print(
        f"Mean comparisons {result.summary.mean_comparisons:.1f} "
        f"(c={result.summary.fitted_constant:.2f}) over {result.summary.runs} runs"
    )
    return EXIT_OK


def cmd_diagnose(args: argparse.Namespace, config: RunConfig) -> int:
    """Chernoff, occupancy and entropy identity diagnostics."""
    coordinator = SelfSortCoordinator(config)
    report = coordinator.diagnose(_load_world(args.world), _load_model(args.model))
    out = config.output_dir
    if config.report_format == FORMAT_CSV:
        _write_csv(report.as_rows(), out / f"{DIAGNOSE_FILE}.csv")
    else:
        _write_json(report.as_dict(), out / f"{DIAGNOSE_FILE}.json")
    print(
        f"Chernoff violations {report.chernoff_violations}, "
        f"mean occupancy {report.occupancy.global_mean:.2f}"
    )
    return EXIT_OK


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML or JSON run configuration")
    common.add_argument("--seed", type=int, help="World generation seed")
    common.add_argument("--out", type=Path, help="Output directory")
    common.add_argument("--rho", type=float, help="Sample multiplier in (0, 1]")
    common.add_argument("--format", choices=REPORT_FORMATS, help="Report format")
    common.add_argument(
        "-v", "--verbose", action="count", default=0, help="More logging (repeatable)"
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per pipeline phase."""
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog="selfsort", description="Self-improving sorting with hidden groups"
    )
    parser.add_argument("--version", action="version", version=__version__)
    commands = parser.add_subparsers(dest="command", required=True)

    generate = commands.add_parser(
        "generate", parents=[common], help="Generate a world"
    )
    generate.add_argument(
        "--samples", type=int, default=0, help="Also record this many instances"
    )
    generate.set_defaults(handler=cmd_generate)

    learn = commands.add_parser("learn", parents=[common], help="Learn a model")
    origin = learn.add_mutually_exclusive_group(required=True)
    origin.add_argument("--world", type=Path, help="World document to sample from")
    origin.add_argument("--stream", type=Path, help="Recorded JSON-lines instances")
    learn.set_defaults(handler=cmd_learn)

    learn_partition = commands.add_parser(
        "learn-partition", parents=[common], help="Learn only the hidden partition"
    )
    learn_partition.add_argument("--samples", type=Path, required=True)
    learn_partition.add_argument(
        "--mu", type=int, help="Extremum bound (default: config)"
    )
    learn_partition.set_defaults(handler=cmd_learn_partition)

    sort = commands.add_parser("sort", parents=[common], help="Sort one instance")
    sort.add_argument("--model", type=Path, required=True)
    sort.add_argument("--instance", type=Path, required=True)
    sort.set_defaults(handler=cmd_sort)

    for name, handler, text in (
        ("bench", cmd_bench, "Benchmark against the reference sort"),
        ("diagnose", cmd_diagnose, "Chernoff and occupancy diagnostics"),
    ):
        sub = commands.add_parser(name, parents=[common], help=text)
        sub.add_argument("--world", type=Path, required=True)
        sub.add_argument("--model", type=Path, required=True)
        sub.set_defaults(handler=handler)
    return parser


def _configure_logging(level: str, verbose: int) -> None:
    if verbose >= 2:
        level = "DEBUG"
    elif verbose == 1 and level not in ("DEBUG", "INFO"):
        level = "INFO"
    logging.basicConfig(
        level=getattr(logging, level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def main(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand and return its exit code."""
    args = build_parser().parse_args(argv)
    config: RunConfig | None = None
    try:
        config = load_config(args.config).with_overrides(
            seed=args.seed, out=args.out, rho=args.rho, report_format=args.format
        )
        _configure_logging(config.log_level, args.verbose)
        handler: Command = args.handler
        return handler(args, config)
    except OracleMismatchError as err:
        _LOGGER.error("%s", err)
        if config is not None:
            save_document(
                SelfSortCodec.encode_instance(Instance(err.values)),
                config.output_dir / MISMATCH_FILE,
            )
        return EXIT_ORACLE_MISMATCH
    except (WorldGenerationError, InvalidWorldError) as err:
        _LOGGER.error("Validation failed: %s", err)
        return EXIT_VALIDATION
    except SelfSortError as err:
        _LOGGER.error("%s", err)
        return EXIT_ERROR
