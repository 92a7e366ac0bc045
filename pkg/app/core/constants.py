from enum import Enum, IntEnum


class AlgorithmKind(str, Enum):
    MEDIAN = "median"
    QUANTILE = "quantile"
    MEAN = "mean"
    COUNT = "count"


class DistributionKind(str, Enum):
    DISTINCT_PERMUTATION = "distinct_permutation"
    UNIFORM_REAL = "uniform_real"
    CONSTANT = "constant"
    TWO_POINT = "two_point"
    EXPLICIT = "explicit"


class StrategyKind(str, Enum):
    NONE = "none"
    STATIC_EXTREME = "static_extreme"
    STICKY_EXTREME = "sticky_extreme"
    ALTERNATING_EXTREME = "alternating_extreme"
    MEAN_INFLATOR = "mean_inflator"
    MEDIAN_PUSHER = "median_pusher"
    RANDOM_NOISE = "random_noise"


class Direction(str, Enum):
    MIN = "min"
    MAX = "max"


class PushDirection(str, Enum):
    UP = "up"
    DOWN = "down"


class Severity(str, Enum):
    HARD = "hard"
    SOFT = "soft"


class Criterion(str, Enum):
    MEDIAN = "median"
    QUANTILE = "quantile"
    QUANTILE_SHIFT = "quantile_shift"
    MEAN = "mean"
    COUNT = "count"


class TraceLevel(str, Enum):
    SUMMARY = "summary"
    EDGES = "edges"


class OutputFormat(str, Enum):
    CSV = "csv"
    JSONL = "jsonl"
    BOTH = "both"


class RowStatus(str, Enum):
    OK = "ok"
    SKIPPED = "skipped"
    ERROR = "error"


class StreamDomain(IntEnum):
    """Top word of the Philox counter; keeps the independent streams of one run apart."""

    PULL = 0
    COIN = 1
    ADVERSARY = 2
    INITIAL = 3
    LOWER_BOUND = 4


# Schedule constants
MEDIAN_DRIFT_BASE = 157 / 156
MEDIAN_SQUARING_BASE = 9 / 8
MEDIAN_DELTA_FACTOR = 30.0
MEDIAN_PHASE2_FACTOR = 8.0
MEAN_CONTRACTION_BASE = 9 / 5
MEAN_PHASE2_FLOOR = 100
MEAN_PHASE2_FACTOR = 40.0
QUANTILE_MAX_ITERATIONS = 10_000
BINOM_TAIL_MAX_TRIALS = 200

# Nodes per Philox stream block; node v reads block v // STREAM_BLOCK_NODES
STREAM_BLOCK_NODES = 1 << 16

TRACE_CSV_COLUMNS = [
    "round", "corrupted", "phi", "psi", "low", "mid", "high", "min", "median", "max",
]

EDGE_CSV_COLUMNS = ["round", "puller", "target", "delivered", "corrupted"]

RESULT_CSV_COLUMNS = [
    "point_id", "seed", "algorithm", "n", "epsilon", "beta", "gamma", "phi", "strategy",
    "status", "reason", "fraction_incorrect", "engine_rounds", "gossip_rounds",
    "phi_final", "psi_drift", "passed", "off_spec",
]
