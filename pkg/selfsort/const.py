"""Constants for the self-improving sorter."""

# Package identity
DOMAIN = "selfsort"
FORMAT_VERSION = 1

# Document kinds
KIND_WORLD = "world"
KIND_MODEL = "model"
KIND_PARTITION = "partition"
KIND_INSTANCE = "instance"

# Source kinds
SOURCE_CONTINUOUS = "continuous-uniform"
SOURCE_GAUSSIAN = "truncated-gaussian"
SOURCE_DISCRETE = "discrete-uniform"
SOURCE_KINDS = [SOURCE_CONTINUOUS, SOURCE_GAUSSIAN, SOURCE_DISCRETE]

# Source presets accepted by the run configuration
PRESET_CONTINUOUS = "continuous"
PRESET_GAUSSIAN = "gaussian"
PRESET_DISCRETE = "discrete"
PRESET_POINT = "point"
PRESET_MIXED = "mixed"
SOURCE_PRESETS = [
    PRESET_CONTINUOUS,
    PRESET_GAUSSIAN,
    PRESET_DISCRETE,
    PRESET_POINT,
    PRESET_MIXED,
]

# Generation defaults
DEFAULT_ATTEMPT_BUDGET = 10_000
DEFAULT_VALUE_LEVELS = 64
DEFAULT_ATOMS = 8
DEFAULT_GAUSSIAN_SD = 0.2
GAUSSIAN_REJECTION_LIMIT = 1_000

# Search and enumeration budgets
DEFAULT_SEARCH_BUDGET = 2_000_000
DEFAULT_ENUMERATION_BUDGET = 1_000_000
DEFAULT_PARTITION_ORACLE_CAP = 12
PARETO_FRONTIER_LIMIT = 256

# Run defaults
DEFAULT_N = 16
DEFAULT_G = 4
DEFAULT_MU = 1
DEFAULT_SIGMA = 2
DEFAULT_SEED = 7
DEFAULT_LEARN_SEED = 11
DEFAULT_EVAL_SEED = 13
DEFAULT_RHO = 1.0
DEFAULT_EVAL_INSTANCES = 200
DEFAULT_CHERNOFF_RUNS = 1_000
DEFAULT_OUTPUT_DIR = "out"
DEFAULT_LOG_LEVEL = "WARNING"

# Report formats
FORMAT_JSON = "json"
FORMAT_CSV = "csv"
REPORT_FORMATS = [FORMAT_JSON, FORMAT_CSV]

# Output file names
WORLD_FILE = "world.json"
VALIDATION_FILE = "validation.json"
MODEL_FILE = "model.json"
PARTITION_FILE = "partition.json"
INSTANCES_FILE = "instances.jsonl"
RANKS_FILE = "ranks.txt"
SORT_REPORT_FILE = "sort_report.json"
BENCH_RUNS_FILE = "bench_runs.csv"
BENCH_SUMMARY_FILE = "bench_summary.json"
MISMATCH_FILE = "mismatch_instance.json"
DIAGNOSE_FILE = "diagnose"

# Acceptance constants
DESCENT_SLOPE = 3
DESCENT_OFFSET = 8
BINOMIAL_MARGIN = 3.0

# Exit codes
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION = 2
EXIT_ORACLE_MISMATCH = 3
