"""The β-strong adversary and the built-in attack strategies.

At the start of every round the adversary fixes a set of at most ⌊βn⌋ nodes,
before any partner is sampled. Every message pulled from one of those nodes
during the round is replaced by a value of the strategy's choosing.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from app.core.constants import PushDirection, StrategyKind, StreamDomain
from app.core.models import NodeSnapshot, corruption_budget
from app.services.rng import node_uniforms, stream


class StrategyDescriptor(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False, frozen=True)

    kind: StrategyKind = StrategyKind.NONE
    value: float = 1e9
    alt_value: float = -1e9
    direction: PushDirection = PushDirection.UP
    offset: float = 0.0
    noise_low: float = 0.0
    noise_high: float = 1.0
    sticky: bool = False

    @model_validator(mode="after")
    def _check_ranges(self):
        if self.noise_low > self.noise_high:
            raise ValueError("noise_low must not exceed noise_high")
        if self.offset < 0:
            raise ValueError("offset must be non-negative")
        return self

    @property
    def is_sticky(self) -> bool:
        return self.sticky or self.kind == StrategyKind.STICKY_EXTREME


@dataclass
class AdversaryContext:
    """What the adversary may inspect when it picks the round's corrupted set."""

    round_index: int
    snapshot: NodeSnapshot
    beta: float
    n: int
    traces: List[Any] = field(default_factory=list)
    snapshots: Optional[List[NodeSnapshot]] = None


@dataclass(frozen=True)
class CorruptionPlan:
    round_index: int
    corrupted: np.ndarray
    mask: Optional[np.ndarray] = None
    state: Dict[str, float] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return int(self.corrupted.shape[0])

    def hits(self, targets: np.ndarray) -> np.ndarray:
        if self.size == 0:
            return np.zeros(targets.shape, dtype=bool)
        return self.mask[targets]

    def to_dict(self):
        return {
            "round_index": self.round_index,
            "corrupted": self.corrupted.tolist(),
            "state": dict(self.state),
        }


def empty_plan(round_index: int) -> CorruptionPlan:
    return CorruptionPlan(round_index, np.empty(0, dtype=np.int64))


class Adversary:
    """Hand-written strategy driven by a StrategyDescriptor.

    ``begin_round`` runs once per round, serially. ``corrupt`` only reads the
    plan and its arguments, so it may be called for any subset of edges in any
    order.
    """

    def __init__(self, descriptor: StrategyDescriptor, beta: float, n: int,
                 seed: int = 0, m_bound: Optional[float] = None):
        self.logger = logging.getLogger(__name__)
        self.descriptor = descriptor
        self.beta = beta
        self.n = n
        self.seed = seed
        self.m_bound = m_bound
        self.budget = 0 if descriptor.kind == StrategyKind.NONE else corruption_budget(beta, n)

    def begin_round(self, context: AdversaryContext) -> CorruptionPlan:
        round_index = context.round_index
        if self.budget == 0:
            return empty_plan(round_index)

        if self.descriptor.is_sticky:
            corrupted = np.arange(self.budget, dtype=np.int64)
        else:
            rng = stream(self.seed, round_index, 0, StreamDomain.ADVERSARY)
            corrupted = np.sort(rng.choice(self.n, size=self.budget, replace=False)).astype(np.int64)

        mask = np.zeros(self.n, dtype=bool)
        mask[corrupted] = True
        return CorruptionPlan(round_index, corrupted, mask, self._state(context))

    def _state(self, context: AdversaryContext) -> Dict[str, float]:
        descriptor = self.descriptor
        kind = descriptor.kind
        if kind == StrategyKind.MEDIAN_PUSHER:
            values = context.snapshot.values
            middle = (values.shape[0] - 1) // 2
            median = float(np.partition(values, middle)[middle])
            if descriptor.offset == 0:
                bound = np.inf if descriptor.direction == PushDirection.UP else -np.inf
                pushed = float(np.nextafter(median, bound))
            elif descriptor.direction == PushDirection.UP:
                pushed = median + descriptor.offset
            else:
                pushed = median - descriptor.offset
            return {"median": median, "value": pushed}
        if kind == StrategyKind.ALTERNATING_EXTREME:
            value = descriptor.value if context.round_index % 2 == 0 else descriptor.alt_value
            return {"value": value}
        if kind == StrategyKind.MEAN_INFLATOR:
            return {"value": self.m_bound if self.m_bound is not None else descriptor.value}
        if kind in (StrategyKind.STATIC_EXTREME, StrategyKind.STICKY_EXTREME):
            return {"value": descriptor.value}
        return {}

    def corrupt(self, plan: CorruptionPlan, pullers: np.ndarray, targets: np.ndarray,
                slot: int, true_values: np.ndarray) -> np.ndarray:
        """Delivered values for edges whose target is in ``plan``'s corrupted set."""
        if self.descriptor.kind == StrategyKind.RANDOM_NOISE:
            if pullers.size == 0:
                return np.empty(0, dtype=np.float64)
            start = int(pullers.min())
            draws = node_uniforms(self.seed, plan.round_index, slot + 1,
                                  start, int(pullers.max()) + 1, StreamDomain.ADVERSARY)
            low, high = self.descriptor.noise_low, self.descriptor.noise_high
            return low + (high - low) * draws[pullers - start]
        if "value" in plan.state:
            return np.full(pullers.shape, plan.state["value"], dtype=np.float64)
        return np.asarray(true_values, dtype=np.float64).copy()


def build_adversary(descriptor: Optional[StrategyDescriptor], config) -> Adversary:
    descriptor = descriptor or StrategyDescriptor()
    return Adversary(descriptor, beta=config.beta, n=config.n,
                     seed=config.seed, m_bound=config.value_ceiling)
