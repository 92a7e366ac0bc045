"""Problem instances, initial values and configuration validation."""

import logging
import math
from dataclasses import dataclass
from typing import Annotated, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.core.constants import AlgorithmKind, Severity, StreamDomain
from app.services import analysis
from app.services.exceptions import InvalidInputError, ScheduleInfeasibleError
from app.services.rng import MASK64, stream

logger = logging.getLogger(__name__)

_BOUND_SLACK = 1e-12

_INPUT_MODEL_CONFIG = ConfigDict(extra="forbid", allow_inf_nan=False, frozen=True)


def corruption_budget(beta: float, n: int) -> int:
    """Largest corrupted-set size allowed per round, ⌊βn⌋."""
    if beta <= 0:
        return 0
    return int(math.floor(beta * n * (1 + _BOUND_SLACK)))


class DistinctPermutation(BaseModel):
    model_config = _INPUT_MODEL_CONFIG
    kind: Literal["distinct_permutation"] = "distinct_permutation"

    def generate(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return (rng.permutation(n) + 1).astype(np.float64)


class UniformReal(BaseModel):
    model_config = _INPUT_MODEL_CONFIG
    kind: Literal["uniform_real"] = "uniform_real"
    lo: float = 0.0
    hi: float = 1.0

    def generate(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.hi < self.lo:
            raise InvalidInputError("uniform_real needs lo <= hi", {"lo": self.lo, "hi": self.hi})
        return rng.uniform(self.lo, self.hi, size=n)


class Constant(BaseModel):
    model_config = _INPUT_MODEL_CONFIG
    kind: Literal["constant"] = "constant"
    c: float

    def generate(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.full(n, self.c, dtype=np.float64)


class TwoPoint(BaseModel):
    """⌊fraction·n⌋ nodes hold ``b``, the rest hold ``a``, at random positions."""

    model_config = _INPUT_MODEL_CONFIG
    kind: Literal["two_point"] = "two_point"
    a: float = 0.0
    b: float = 1.0
    fraction: float = Field(default=0.5, ge=0.0, le=1.0)

    def generate(self, n: int, rng: np.random.Generator) -> np.ndarray:
        count_b = int(math.floor(self.fraction * n + 1e-9))
        values = np.full(n, self.a, dtype=np.float64)
        values[:count_b] = self.b
        return rng.permutation(values)


class Explicit(BaseModel):
    model_config = _INPUT_MODEL_CONFIG
    kind: Literal["explicit"] = "explicit"
    values: List[float]

    def generate(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if len(self.values) != n:
            raise InvalidInputError(
                message=f"Explicit value list has {len(self.values)} entries, expected {n}",
                details={"received": len(self.values), "expected": n},
            )
        return np.asarray(self.values, dtype=np.float64)


ValueDistribution = Annotated[
    Union[DistinctPermutation, UniformReal, Constant, TwoPoint, Explicit],
    Field(discriminator="kind"),
]


class ScheduleOverrides(BaseModel):
    """Forced schedule constants for desk-scale tests; any run using them is off-spec."""

    model_config = _INPUT_MODEL_CONFIG
    delta: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    gamma_prime: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    eta: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    k: Optional[int] = Field(default=None, ge=1)

    def is_empty(self) -> bool:
        return all(value is None for value in self.model_dump().values())


class SimConfig(BaseModel):
    model_config = _INPUT_MODEL_CONFIG

    n: int
    epsilon: float
    beta: float = 0.0
    gamma: float
    phi: Optional[float] = None
    m_bound: Optional[float] = None
    algorithm: AlgorithmKind
    seed: int = Field(default=0, ge=0, le=MASK64)
    distribution: ValueDistribution = Field(default_factory=DistinctPermutation)
    overrides: Optional[ScheduleOverrides] = None

    @property
    def off_spec(self) -> bool:
        return self.overrides is not None and not self.overrides.is_empty()

    @property
    def value_ceiling(self) -> Optional[float]:
        if self.algorithm == AlgorithmKind.COUNT:
            return 1.0 if self.m_bound is None else self.m_bound
        return self.m_bound


@dataclass(frozen=True)
class ConfigViolation:
    field: str
    message: str
    severity: Severity = Severity.HARD

    @property
    def hard(self) -> bool:
        return self.severity == Severity.HARD

    def to_dict(self):
        return {"field": self.field, "message": self.message, "severity": self.severity.value}


def _exceeds(value: float, bound: float) -> bool:
    return value > bound * (1 + _BOUND_SLACK)


def validate_config(config: SimConfig) -> List[ConfigViolation]:
    """Every violated parameter condition; hard ones block a run, soft ones are asymptotic."""
    violations: List[ConfigViolation] = []

    def hard(field: str, message: str):
        violations.append(ConfigViolation(field, message, Severity.HARD))

    def soft(field: str, message: str):
        violations.append(ConfigViolation(field, message, Severity.SOFT))

    n, eps, beta, gamma = config.n, config.epsilon, config.beta, config.gamma

    if n < 2:
        hard("n", "n must be at least 2")
    if not 0.0 < eps < 1.0:
        hard("epsilon", "epsilon must lie in (0, 1)")
    if not 0.0 <= beta < 1.0:
        hard("beta", "beta must lie in [0, 1)")
    if not 0.0 < gamma < 1.0:
        hard("gamma", "gamma must lie in (0, 1)")
    elif n >= 2 and gamma < 1.0 / (2 * n):
        hard("gamma", "gamma below 1/(2n)")

    if violations:
        return violations

    log_n = math.log(n)
    algorithm = config.algorithm

    if algorithm == AlgorithmKind.MEDIAN:
        if _exceeds(beta, eps / 14):
            hard("beta", "beta exceeds epsilon/14")
        if eps < n ** -0.0019:
            soft("epsilon", "epsilon below the n^-0.0019 scale required for concentration")

    elif algorithm == AlgorithmKind.QUANTILE:
        if config.phi is None:
            hard("phi", "quantile runs need phi")
        elif not 0.0 < config.phi < 1.0:
            hard("phi", "phi must lie in (0, 1)")
        if _exceeds(eps, 1 / 6):
            hard("epsilon", "epsilon exceeds 1/6")
        if _exceeds(beta, eps ** 2.5 / 16):
            hard("beta", "beta exceeds epsilon^2.5/16")
        if eps < (log_n / n) ** 0.2:
            soft("epsilon", "epsilon below the (ln n / n)^(1/5) scale required for concentration")

    elif algorithm in (AlgorithmKind.MEAN, AlgorithmKind.COUNT):
        ceiling = config.value_ceiling
        if ceiling is None:
            hard("m_bound", "mean runs need m_bound")
        elif ceiling <= 0:
            hard("m_bound", "m_bound must be positive")
        if algorithm == AlgorithmKind.COUNT and ceiling is not None and ceiling != 1.0:
            hard("m_bound", "count runs use m_bound = 1")
        if _exceeds(beta, (eps / 100) ** 2.5):
            hard("beta", "beta exceeds (epsilon/100)^2.5")
        if eps < log_n ** 1.2 / n ** 0.2:
            soft("epsilon", "epsilon below the (ln n)^(6/5)/n^(1/5) scale required for concentration")

    if any(v.hard for v in violations):
        return violations

    overrides = config.overrides
    try:
        if algorithm == AlgorithmKind.MEDIAN:
            analysis.median_schedule(n, eps, beta, gamma, overrides=overrides)
        elif algorithm == AlgorithmKind.QUANTILE:
            analysis.median_schedule(n, analysis.composed_median_epsilon(config.phi, eps), beta, gamma,
                                    overrides=overrides)
        else:
            schedule = analysis.mean_schedule(n, eps, beta, gamma, overrides=overrides)
            if not schedule.eta_within_bound:
                soft("epsilon", "eta exceeds (epsilon/100)^2.5; delta dominates at this n")
    except ScheduleInfeasibleError as e:
        soft("n", f"schedule infeasible at this n: {e.message}")

    if config.off_spec:
        soft("overrides", "off-spec schedule overrides in use")

    return violations


def hard_violations(config: SimConfig) -> List[ConfigViolation]:
    return [v for v in validate_config(config) if v.hard]


@dataclass(frozen=True)
class NodeSnapshot:
    """Values held by the n nodes at the start of ``round_index``; read-only once built."""

    values: np.ndarray
    round_index: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise InvalidInputError("Snapshot values must be one-dimensional")
        if not np.isfinite(values).all():
            raise InvalidInputError("Snapshot values must be finite",
                                    {"round_index": self.round_index})
        if self.round_index < 0:
            raise InvalidInputError("round_index must be non-negative")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    def advance(self, values: np.ndarray) -> "NodeSnapshot":
        return NodeSnapshot(values, self.round_index + 1)

    def to_dict(self):
        return {"round_index": self.round_index, "values": self.values.tolist()}


def generate_initial_values(config: SimConfig,
                            rng: Optional[np.random.Generator] = None) -> NodeSnapshot:
    """Round-0 snapshot drawn from the config's distribution; deterministic in the seed."""
    if rng is None:
        rng = stream(config.seed, 0, 0, StreamDomain.INITIAL)

    values = config.distribution.generate(config.n, rng)

    ceiling = config.value_ceiling
    if config.algorithm in (AlgorithmKind.MEAN, AlgorithmKind.COUNT) and ceiling is not None:
        if values.size and (values.min() < 0.0 or values.max() > ceiling):
            raise InvalidInputError(
                message="Initial values must lie in [0, m_bound] for mean runs",
                details={"min": float(values.min()), "max": float(values.max()), "m_bound": ceiling},
            )
    if config.algorithm == AlgorithmKind.COUNT and not np.isin(values, (0.0, 1.0)).all():
        raise InvalidInputError("Count runs need initial values in {0, 1}")

    return NodeSnapshot(values, 0)
