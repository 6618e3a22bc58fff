"""Run configuration for the selfsort command line."""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, replace
import json
import logging
from pathlib import Path
import tomllib
from typing import Any

import voluptuous as vol

from .const import (
    DEFAULT_ATOMS,
    DEFAULT_ATTEMPT_BUDGET,
    DEFAULT_CHERNOFF_RUNS,
    DEFAULT_ENUMERATION_BUDGET,
    DEFAULT_EVAL_INSTANCES,
    DEFAULT_EVAL_SEED,
    DEFAULT_G,
    DEFAULT_LEARN_SEED,
    DEFAULT_LOG_LEVEL,
    DEFAULT_MU,
    DEFAULT_N,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_RHO,
    DEFAULT_SEARCH_BUDGET,
    DEFAULT_SEED,
    DEFAULT_SIGMA,
    FORMAT_JSON,
    PRESET_CONTINUOUS,
    REPORT_FORMATS,
    SOURCE_PRESETS,
)
from .engine.exceptions import ConfigError

_LOGGER = logging.getLogger(__name__)

_COUNT = vol.All(vol.Coerce(int), vol.Range(min=1))
_NON_NEGATIVE = vol.All(vol.Coerce(int), vol.Range(min=0))
_OPTIONAL_COUNT = vol.Any(None, _COUNT)

WORLD_SCHEMA = vol.Schema(
    {
        vol.Optional("n", default=DEFAULT_N): _COUNT,
        vol.Optional("g", default=DEFAULT_G): _COUNT,
        vol.Optional("mu", default=DEFAULT_MU): _NON_NEGATIVE,
        vol.Optional("sigma", default=DEFAULT_SIGMA): _NON_NEGATIVE,
        vol.Optional("source", default=PRESET_CONTINUOUS): vol.In(SOURCE_PRESETS),
        vol.Optional("atoms", default=DEFAULT_ATOMS): _COUNT,
        vol.Optional("value_levels", default=None): vol.Any(
            None, vol.All(vol.Coerce(int), vol.Range(min=2))
        ),
        vol.Optional("grid_points", default=None): vol.Any(
            None, vol.All(vol.Coerce(int), vol.Range(min=2))
        ),
        vol.Optional("seed", default=DEFAULT_SEED): _NON_NEGATIVE,
        vol.Optional("attempt_budget", default=DEFAULT_ATTEMPT_BUDGET): _COUNT,
    }
)

LEARNING_SCHEMA = vol.Schema(
    {
        vol.Optional("seed", default=DEFAULT_LEARN_SEED): _NON_NEGATIVE,
        vol.Optional("rho", default=DEFAULT_RHO): vol.All(
            vol.Coerce(float), vol.Range(min=0, max=1, min_included=False)
        ),
        vol.Optional("lambda", default=None): _OPTIONAL_COUNT,
        vol.Optional("partition_samples", default=None): _OPTIONAL_COUNT,
        vol.Optional("search_budget", default=DEFAULT_SEARCH_BUDGET): _COUNT,
        vol.Optional("record_statistics", default=False): bool,
    }
)

BENCH_SCHEMA = vol.Schema(
    {
        vol.Optional("seed", default=DEFAULT_EVAL_SEED): _NON_NEGATIVE,
        vol.Optional("instances", default=DEFAULT_EVAL_INSTANCES): _COUNT,
        vol.Optional("chernoff_runs", default=DEFAULT_CHERNOFF_RUNS): vol.All(
            vol.Coerce(int), vol.Range(min=100)
        ),
        vol.Optional("enumeration_budget", default=DEFAULT_ENUMERATION_BUDGET): _COUNT,
    }
)

OUTPUT_SCHEMA = vol.Schema(
    {
        vol.Optional("directory", default=DEFAULT_OUTPUT_DIR): str,
        vol.Optional("format", default=FORMAT_JSON): vol.In(REPORT_FORMATS),
    }
)

LOGGING_SCHEMA = vol.Schema(
    {
        vol.Optional("level", default=DEFAULT_LOG_LEVEL): vol.All(
            str, vol.Upper, vol.In(["DEBUG", "INFO", "WARNING", "ERROR"])
        ),
    }
)

RUN_CONFIG_SCHEMA = vol.Schema(
    {
        vol.Optional("world", default=dict): WORLD_SCHEMA,
        vol.Optional("learning", default=dict): LEARNING_SCHEMA,
        vol.Optional("bench", default=dict): BENCH_SCHEMA,
        vol.Optional("output", default=dict): OUTPUT_SCHEMA,
        vol.Optional("logging", default=dict): LOGGING_SCHEMA,
    }
)


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration."""

    n: int = DEFAULT_N
    g: int = DEFAULT_G
    mu: int = DEFAULT_MU
    sigma: int = DEFAULT_SIGMA
    source: str = PRESET_CONTINUOUS
    atoms: int = DEFAULT_ATOMS
    value_levels: int | None = None
    grid_points: int | None = None
    seed: int = DEFAULT_SEED
    attempt_budget: int = DEFAULT_ATTEMPT_BUDGET
    learn_seed: int = DEFAULT_LEARN_SEED
    rho: float = DEFAULT_RHO
    lam: int | None = None
    partition_samples: int | None = None
    search_budget: int = DEFAULT_SEARCH_BUDGET
    record_statistics: bool = False
    eval_seed: int = DEFAULT_EVAL_SEED
    eval_instances: int = DEFAULT_EVAL_INSTANCES
    chernoff_runs: int = DEFAULT_CHERNOFF_RUNS
    enumeration_budget: int = DEFAULT_ENUMERATION_BUDGET
    output_dir: Path = Path(DEFAULT_OUTPUT_DIR)
    report_format: str = FORMAT_JSON
    log_level: str = DEFAULT_LOG_LEVEL

    def __post_init__(self) -> None:
        """Validate cross-field constraints."""
        if self.g > self.n:
            raise ConfigError(f"g={self.g} exceeds n={self.n}")
        if not 0 < self.rho <= 1:
            raise ConfigError(f"rho must lie in (0, 1], got {self.rho}")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> RunConfig:
        """Validate a nested mapping against RUN_CONFIG_SCHEMA."""
        try:
            checked = RUN_CONFIG_SCHEMA(dict(data))
        except vol.Invalid as err:
            raise ConfigError(f"Invalid configuration: {err}") from err
        world, learning = checked["world"], checked["learning"]
        bench, output = checked["bench"], checked["output"]
        return cls(
            n=world["n"],
            g=world["g"],
            mu=world["mu"],
            sigma=world["sigma"],
            source=world["source"],
            atoms=world["atoms"],
            value_levels=world["value_levels"],
            grid_points=world["grid_points"],
            seed=world["seed"],
            attempt_budget=world["attempt_budget"],
            learn_seed=learning["seed"],
            rho=learning["rho"],
            lam=learning["lambda"],
            partition_samples=learning["partition_samples"],
            search_budget=learning["search_budget"],
            record_statistics=learning["record_statistics"],
            eval_seed=bench["seed"],
            eval_instances=bench["instances"],
            chernoff_runs=bench["chernoff_runs"],
            enumeration_budget=bench["enumeration_budget"],
            output_dir=Path(output["directory"]),
            report_format=output["format"],
            log_level=checked["logging"]["level"],
        )

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        out: Path | None = None,
        rho: float | None = None,
        report_format: str | None = None,
    ) -> RunConfig:
        """Apply command-line flags on top of file values."""
        changes: dict[str, Any] = {}
        if seed is not None:
            changes["seed"] = seed
        if out is not None:
            changes["output_dir"] = out
        if rho is not None:
            changes["rho"] = rho
        if report_format is not None:
            changes["report_format"] = report_format
        return replace(self, **changes) if changes else self


def load_config(path: Path | None) -> RunConfig:
    """Read TOML or JSON configuration; no path gives the defaults."""
    if path is None:
        return RunConfig.from_mapping({})
    try:
        raw = path.read_bytes()
    except OSError as err:
        raise ConfigError(f"Cannot read configuration {path}: {err}") from err
    try:
        if path.suffix == ".json":
            data = json.loads(raw)
        else:
            data = tomllib.loads(raw.decode("utf-8"))
    except (json.JSONDecodeError, tomllib.TOMLDecodeError, UnicodeDecodeError) as err:
        raise ConfigError(f"Malformed configuration {path}: {err}") from err
    if not isinstance(data, dict):
        raise ConfigError(f"Configuration {path} must be a table")
    _LOGGER.debug("Loaded configuration from %s", path)
    return RunConfig.from_mapping(data)
