"""Synchronous pull-gossip rounds.

A round fixes the adversary's corrupted set, samples every node's partners,
replaces messages pulled from corrupted nodes, and applies the update rule to
all nodes at once. Reads come only from the snapshot the round started with.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.config import settings
from app.core.constants import Direction, TraceLevel
from app.core.models import NodeSnapshot, corruption_budget
from app.services.adversary import AdversaryContext, CorruptionPlan, empty_plan
from app.services.exceptions import AdversaryContractError
from app.services.metrics import RoundSummarizer, RoundSummary
from app.services.rng import PartnerSampler

_FLOAT_MAX = np.finfo(np.float64).max


@dataclass(frozen=True)
class PullEdge:
    puller: int
    target: int
    delivered_value: float
    corrupted: bool


@dataclass(frozen=True)
class EdgeBatch:
    """All pull edges of one round, stored column-wise."""

    pullers: np.ndarray
    targets: np.ndarray
    delivered: np.ndarray
    corrupted: np.ndarray

    def __len__(self) -> int:
        return int(self.pullers.shape[0])

    def __iter__(self) -> Iterator[PullEdge]:
        for puller, target, value, hit in zip(
            self.pullers.tolist(), self.targets.tolist(),
            self.delivered.tolist(), self.corrupted.tolist(),
        ):
            yield PullEdge(puller, target, value, hit)

    @classmethod
    def concat(cls, batches: Sequence["EdgeBatch"]) -> "EdgeBatch":
        if not batches:
            return cls(*(np.empty(0, dtype=dt) for dt in (np.int64, np.int64, np.float64, bool)))
        return cls(
            np.concatenate([b.pullers for b in batches]),
            np.concatenate([b.targets for b in batches]),
            np.concatenate([b.delivered for b in batches]),
            np.concatenate([b.corrupted for b in batches]),
        )

    def to_rows(self, round_index: int) -> List[Dict]:
        return [
            {"round": round_index, "puller": e.puller, "target": e.target,
             "delivered": e.delivered_value, "corrupted": int(e.corrupted)}
            for e in self
        ]


@dataclass(frozen=True)
class RoundTrace:
    round_index: int
    phase: str
    pulls: int
    corrupted_set: np.ndarray
    summary: RoundSummary
    corrupted_edges: int = 0
    edges: Optional[EdgeBatch] = None

    def to_csv_row(self) -> Dict:
        s = self.summary
        return {
            "round": self.round_index, "corrupted": int(self.corrupted_set.shape[0]),
            "phi": s.phi, "psi": s.psi, "low": s.low, "mid": s.mid, "high": s.high,
            "min": s.min, "median": s.median, "max": s.max,
        }

    def to_dict(self):
        data = {
            "round_index": self.round_index,
            "phase": self.phase,
            "pulls": self.pulls,
            "corrupted_set": self.corrupted_set.tolist(),
            "corrupted_edges": self.corrupted_edges,
            "summary": self.summary.to_dict(),
        }
        if self.edges is not None:
            data["edges"] = {
                "pullers": self.edges.pullers.tolist(),
                "targets": self.edges.targets.tolist(),
                "delivered": self.edges.delivered.tolist(),
                "corrupted": self.edges.corrupted.tolist(),
            }
        return data


class UpdateRule(ABC):
    """How a node turns the values it pulled this round into its next value."""

    name = "rule"

    @abstractmethod
    def pulls_per_node(self, round_index: int) -> int:
        ...

    def branch_probability(self, round_index: int) -> Optional[float]:
        """Per-node coin bias, or None when the rule has no random branch."""
        return None

    def active_pulls(self, branch: Optional[np.ndarray], k: int) -> Optional[np.ndarray]:
        """(n, k) mask of pulls that actually happen; None means all of them."""
        return None

    def prepare(self, delivered: np.ndarray) -> np.ndarray:
        return delivered

    @abstractmethod
    def combine(self, own: np.ndarray, delivered: np.ndarray,
                branch: Optional[np.ndarray], round_index: int) -> np.ndarray:
        ...


class MedianOfThree(UpdateRule):
    name = "median_of_three"

    def pulls_per_node(self, round_index: int) -> int:
        return 3

    def combine(self, own, delivered, branch, round_index):
        a, b, c = delivered[:, 0], delivered[:, 1], delivered[:, 2]
        return np.maximum(np.minimum(a, b), np.minimum(np.maximum(a, b), c))


class ShiftRule(UpdateRule):
    """With probability δ keep the min (or max) of two pulls, otherwise copy one pull."""

    name = "shift"

    def __init__(self, direction: Direction, delta: float):
        self.direction = direction
        self.delta = delta

    def pulls_per_node(self, round_index: int) -> int:
        return 2

    def branch_probability(self, round_index: int) -> Optional[float]:
        return self.delta

    def active_pulls(self, branch, k):
        active = np.ones((branch.shape[0], k), dtype=bool)
        active[:, 1] = branch
        return active

    def combine(self, own, delivered, branch, round_index):
        first, second = delivered[:, 0], delivered[:, 1]
        pick = np.minimum if self.direction == Direction.MIN else np.maximum
        return np.where(branch, pick(first, second), first)


class PullAverage(UpdateRule):
    """Average of two pulls, each clipped to [0, M] first when M is given."""

    name = "pull_average"

    def __init__(self, m_bound: Optional[float] = None):
        self.m_bound = m_bound

    def pulls_per_node(self, round_index: int) -> int:
        return 2

    def prepare(self, delivered):
        if self.m_bound is None:
            return delivered
        return np.clip(delivered, 0.0, self.m_bound)

    def combine(self, own, delivered, branch, round_index):
        return (delivered[:, 0] + delivered[:, 1]) / 2


@dataclass(frozen=True)
class CombinePhase:
    """One engine round per rule, in order."""

    name: str
    rules: Tuple[UpdateRule, ...]

    @property
    def rounds(self) -> int:
        return len(self.rules)


@dataclass(frozen=True)
class SamplePhase:
    """``k`` single-pull rounds over frozen values; each node ends on the lower median of its samples."""

    name: str
    k: int
    clip: Optional[Tuple[float, float]] = None

    @property
    def rounds(self) -> int:
        return self.k


Phase = Union[CombinePhase, SamplePhase]


@dataclass
class EngineResult:
    initial: NodeSnapshot
    final: NodeSnapshot
    traces: List[RoundTrace] = field(default_factory=list)
    phase_snapshots: Dict[str, NodeSnapshot] = field(default_factory=dict)
    phase_rounds: Dict[str, int] = field(default_factory=dict)
    gossip_rounds: int = 0

    @property
    def engine_rounds(self) -> int:
        return len(self.traces)


def lower_median(samples: np.ndarray) -> np.ndarray:
    """Row-wise lower-middle order statistic."""
    middle = (samples.shape[1] - 1) // 2
    return np.partition(samples, middle, axis=1)[:, middle]


class GossipEngine:
    def __init__(self, sampler: PartnerSampler, adversary=None, beta: float = 0.0,
                 summarizer: Optional[Callable[[np.ndarray], RoundSummary]] = None,
                 trace_level: TraceLevel = TraceLevel.SUMMARY,
                 edge_max_nodes: Optional[int] = None,
                 chunk_nodes: Optional[int] = None,
                 history_max_nodes: Optional[int] = None):
        self.logger = logging.getLogger(__name__)
        self.sampler = sampler
        self.adversary = adversary
        self.beta = beta
        self.summarizer = summarizer or RoundSummarizer()
        self.trace_level = TraceLevel(trace_level)
        self.edge_max_nodes = settings.TRACE_EDGE_MAX_NODES if edge_max_nodes is None else edge_max_nodes
        self.chunk_nodes = settings.SAMPLE_CHUNK_NODES if chunk_nodes is None else chunk_nodes
        self.history_max_nodes = (
            settings.HISTORY_SNAPSHOT_MAX_NODES if history_max_nodes is None else history_max_nodes
        )
        self.traces: List[RoundTrace] = []
        self.snapshots: Optional[List[NodeSnapshot]] = None

    def _capture_edges(self, n: int) -> bool:
        return self.trace_level == TraceLevel.EDGES and n <= self.edge_max_nodes

    def _begin_round(self, snapshot: NodeSnapshot, round_index: int) -> CorruptionPlan:
        if self.adversary is None:
            return empty_plan(round_index)
        context = AdversaryContext(
            round_index=round_index, snapshot=snapshot, beta=self.beta, n=snapshot.n,
            traces=self.traces, snapshots=self.snapshots,
        )
        plan = self.adversary.begin_round(context)
        self._check_plan(plan, snapshot.n)
        return plan

    def _check_plan(self, plan: CorruptionPlan, n: int):
        budget = corruption_budget(self.beta, n)
        if plan.size > budget:
            raise AdversaryContractError(
                message="Corrupted set exceeds the per-round budget",
                details={"round": plan.round_index, "size": plan.size, "budget": budget},
            )
        if plan.size == 0:
            return
        ids = plan.corrupted
        if ids.min() < 0 or ids.max() >= n or np.unique(ids).shape[0] != ids.shape[0]:
            raise AdversaryContractError(
                message="Corrupted set holds repeated or out-of-range node ids",
                details={"round": plan.round_index},
            )

    def _corrupt(self, plan: CorruptionPlan, pullers: np.ndarray, targets: np.ndarray,
                 slot: int, true_values: np.ndarray) -> np.ndarray:
        out = np.asarray(
            self.adversary.corrupt(plan, pullers, targets, slot, true_values), dtype=np.float64
        )
        if out.shape != pullers.shape:
            raise AdversaryContractError(
                message="Adversary returned the wrong number of values",
                details={"round": plan.round_index, "expected": int(pullers.shape[0]),
                         "received": list(out.shape)},
            )
        if np.isnan(out).any():
            raise AdversaryContractError(
                message="Adversary delivered NaN",
                details={"round": plan.round_index, "slot": slot},
            )
        return np.clip(out, -_FLOAT_MAX, _FLOAT_MAX)

    def _pull(self, values: np.ndarray, plan: CorruptionPlan, round_index: int, slot: int,
              pullers: np.ndarray, targets: np.ndarray,
              active: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        delivered = values[targets]
        hit = plan.hits(targets)
        if active is not None:
            hit &= active
        if hit.any():
            delivered[hit] = self._corrupt(plan, pullers[hit], targets[hit], slot, delivered[hit])
        return delivered, hit

    def _record(self, trace: RoundTrace, snapshot: NodeSnapshot):
        self.traces.append(trace)
        if self.snapshots is not None:
            self.snapshots.append(snapshot)

    def execute_round(self, snapshot: NodeSnapshot, rule: UpdateRule,
                      round_index: Optional[int] = None,
                      phase: str = "") -> Tuple[NodeSnapshot, RoundTrace]:
        round_index = snapshot.round_index if round_index is None else round_index
        n = snapshot.n
        values = snapshot.values
        plan = self._begin_round(snapshot, round_index)

        k = rule.pulls_per_node(round_index)
        branch = None
        probability = rule.branch_probability(round_index)
        if probability is not None:
            if probability >= 1.0:
                branch = np.ones(n, dtype=bool)
            else:
                branch = self.sampler.uniforms(round_index, n) < probability
        active = rule.active_pulls(branch, k) if branch is not None else None

        pullers = np.arange(n)
        delivered = np.empty((n, k), dtype=np.float64)
        corrupted_edges = 0
        batches = []
        for slot in range(k):
            targets = self.sampler.targets(round_index, slot, n)
            slot_active = active[:, slot] if active is not None else None
            column, hit = self._pull(values, plan, round_index, slot, pullers, targets, slot_active)
            delivered[:, slot] = column
            corrupted_edges += int(np.count_nonzero(hit))
            if self._capture_edges(n):
                keep = slot_active if slot_active is not None else slice(None)
                batches.append(EdgeBatch(pullers[keep], targets[keep], column[keep], hit[keep]))

        new_values = rule.combine(values, rule.prepare(delivered), branch, round_index)
        next_snapshot = NodeSnapshot(new_values, round_index + 1)
        trace = RoundTrace(
            round_index=round_index, phase=phase, pulls=k,
            corrupted_set=plan.corrupted, summary=self.summarizer(next_snapshot.values),
            corrupted_edges=corrupted_edges,
            edges=EdgeBatch.concat(batches) if self._capture_edges(n) else None,
        )
        self.logger.debug(f"Round {round_index} ({phase}): {corrupted_edges} corrupted pulls")
        return next_snapshot, trace

    def _sample(self, snapshot: NodeSnapshot, phase: SamplePhase) -> NodeSnapshot:
        n, k = snapshot.n, phase.k
        start_round = snapshot.round_index
        values = snapshot.values
        frozen_summary = self.summarizer(values)

        # each corrupted set is chosen after the previous round's trace is recorded
        first = len(self.traces)
        plans = []
        for r in range(k):
            round_index = start_round + r
            plan = self._begin_round(snapshot, round_index)
            corrupted_edges = 0
            if plan.size:
                for start in range(0, n, self.chunk_nodes):
                    stop = min(n, start + self.chunk_nodes)
                    targets = self.sampler.targets(round_index, 0, n, start, stop)
                    corrupted_edges += int(np.count_nonzero(plan.hits(targets)))
            plans.append(plan)
            self._record(RoundTrace(
                round_index=round_index, phase=phase.name, pulls=1,
                corrupted_set=plan.corrupted, summary=frozen_summary,
                corrupted_edges=corrupted_edges,
            ), snapshot)

        capture = self._capture_edges(n)
        batches: List[List[EdgeBatch]] = [[] for _ in range(k)]
        result = np.empty(n, dtype=np.float64)
        for start in range(0, n, self.chunk_nodes):
            stop = min(n, start + self.chunk_nodes)
            pullers = np.arange(start, stop)
            samples = np.empty((stop - start, k), dtype=np.float64)
            for r, plan in enumerate(plans):
                targets = self.sampler.targets(start_round + r, 0, n, start, stop)
                column, hit = self._pull(values, plan, start_round + r, 0, pullers, targets)
                if phase.clip is not None:
                    column = np.clip(column, *phase.clip)
                samples[:, r] = column
                if capture:
                    batches[r].append(EdgeBatch(pullers, targets, column, hit))
            result[start:stop] = lower_median(samples)

        final = NodeSnapshot(result, start_round + k)
        for r in range(k):
            update = {}
            if capture:
                update["edges"] = EdgeBatch.concat(batches[r])
            if r == k - 1:
                update["summary"] = self.summarizer(result)
            self.traces[first + r] = replace(self.traces[first + r], **update)
        if self.snapshots is not None:
            self.snapshots[-1] = final
        return final

    def run(self, initial: NodeSnapshot, phases: Sequence[Phase]) -> EngineResult:
        """Drive the phases in order from ``initial``; deterministic in the sampler's seed."""
        self.traces = []
        self.snapshots = [initial] if initial.n <= self.history_max_nodes else None
        result = EngineResult(initial=initial, final=initial)
        snapshot = initial
        for phase in phases:
            self.logger.info(f"Phase {phase.name}: {phase.rounds} rounds from round {snapshot.round_index}")
            if isinstance(phase, SamplePhase):
                if phase.k > 0:
                    snapshot = self._sample(snapshot, phase)
                result.gossip_rounds += phase.k
            else:
                for rule in phase.rules:
                    snapshot, trace = self.execute_round(snapshot, rule, phase=phase.name)
                    self._record(trace, snapshot)
                    result.gossip_rounds += trace.pulls
            result.phase_snapshots[phase.name] = snapshot
            result.phase_rounds[phase.name] = phase.rounds
        result.final = snapshot
        result.traces = list(self.traces)
        return result
