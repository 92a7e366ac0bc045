"""The median, quantile and mean protocols as phase sequences over the engine."""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union

import numpy as np

from app.core.constants import AlgorithmKind, Criterion, TraceLevel
from app.core.models import NodeSnapshot, SimConfig, generate_initial_values, hard_violations
from app.services import analysis
from app.services.adversary import Adversary, StrategyDescriptor, build_adversary
from app.services.engine import (
    CombinePhase,
    EngineResult,
    GossipEngine,
    MedianOfThree,
    PullAverage,
    RoundTrace,
    SamplePhase,
    ShiftRule,
)
from app.services.exceptions import InvalidInputError
from app.services.metrics import EvalReport, RoundSummarizer, evaluate_run
from app.services.rng import CounterSampler, PartnerSampler

logger = logging.getLogger(__name__)

HISTOGRAM_BINS = 20

AdversaryArg = Optional[Union[Adversary, StrategyDescriptor]]


@dataclass
class AlgorithmRun:
    config: SimConfig
    criterion: Criterion
    schedules: Dict[str, Any]
    initial: NodeSnapshot
    final: NodeSnapshot
    traces: List[RoundTrace] = field(default_factory=list)
    phase_rounds: Dict[str, int] = field(default_factory=dict)
    phase_snapshots: Dict[str, NodeSnapshot] = field(default_factory=dict)
    gossip_rounds: int = 0
    report: Optional[EvalReport] = None

    @property
    def engine_rounds(self) -> int:
        return len(self.traces)

    @property
    def phase_boundaries(self) -> Dict[str, int]:
        """Round index at which each phase ends."""
        boundaries, end = {}, 0
        for name, rounds in self.phase_rounds.items():
            end += rounds
            boundaries[name] = end
        return boundaries

    def output_histogram(self, bins: int = HISTOGRAM_BINS) -> Dict[str, List[float]]:
        counts, edges = np.histogram(self.final.values, bins=bins)
        return {"counts": counts.tolist(), "edges": edges.tolist()}

    def to_dict(self, include_traces: bool = False):
        data = {
            "config": self.config.model_dump(mode="json"),
            "criterion": self.criterion.value,
            "schedules": {name: schedule.to_dict() for name, schedule in self.schedules.items()},
            "phase_rounds": dict(self.phase_rounds),
            "phase_boundaries": self.phase_boundaries,
            "engine_rounds": self.engine_rounds,
            "gossip_rounds": self.gossip_rounds,
            "output_histogram": self.output_histogram(),
            "off_spec": self.config.off_spec,
        }
        if self.report is not None:
            data["report"] = self.report.to_dict()
        if include_traces:
            data["traces"] = [trace.to_dict() for trace in self.traces]
        return data


def _require(config: SimConfig, *kinds: AlgorithmKind):
    if config.algorithm not in kinds:
        raise InvalidInputError(
            message=f"Config is for {config.algorithm.value}, expected {' or '.join(k.value for k in kinds)}",
            details={"algorithm": config.algorithm.value},
        )
    violations = hard_violations(config)
    if violations:
        raise InvalidInputError(
            message="Config violates the algorithm's parameter conditions",
            details={"violations": [v.to_dict() for v in violations]},
        )


def _adversary(adversary: AdversaryArg, config: SimConfig) -> Adversary:
    if isinstance(adversary, Adversary):
        return adversary
    return build_adversary(adversary, config)


def median_phases(schedule: analysis.MedianSchedule, prefix: str = "") -> list:
    phases = [CombinePhase(f"{prefix}phase1", tuple(MedianOfThree() for _ in range(schedule.t)))]
    if schedule.has_phase2:
        phases.append(SamplePhase(f"{prefix}phase2", schedule.k))
    return phases


def shift_phase(schedule: analysis.QuantileSchedule) -> CombinePhase:
    return CombinePhase("shift", tuple(ShiftRule(schedule.direction, d) for d in schedule.delta_seq))


def mean_phases(schedule: analysis.MeanSchedule, m_bound: float) -> list:
    phases = [CombinePhase("phase1", tuple(PullAverage(m_bound) for _ in range(schedule.t_rounds)))]
    if schedule.has_phase2:
        phases.append(SamplePhase("phase2", schedule.k, clip=(0.0, m_bound)))
    return phases


def _execute(config: SimConfig, criterion: Criterion, schedules: Dict[str, Any], phases: list,
             adversary: AdversaryArg, sampler: Optional[PartnerSampler],
             initial: Optional[NodeSnapshot], trace_level: TraceLevel,
             phi: Optional[float] = None) -> AlgorithmRun:
    initial = initial if initial is not None else generate_initial_values(config)
    if initial.n != config.n:
        raise InvalidInputError("Initial snapshot size differs from n",
                                {"received": initial.n, "expected": config.n})

    summary_eps = None if criterion in (Criterion.MEAN, Criterion.COUNT) else config.epsilon
    engine = GossipEngine(
        sampler=sampler or CounterSampler(config.seed),
        adversary=_adversary(adversary, config),
        beta=config.beta,
        summarizer=RoundSummarizer(initial.values, phi if phi is not None else 0.5, summary_eps),
        trace_level=trace_level,
    )
    logger.info(f"Running {criterion.value}: n={config.n}, seed={config.seed}, "
                f"rounds={sum(p.rounds for p in phases)}")
    result: EngineResult = engine.run(initial, phases)

    run = AlgorithmRun(
        config=config, criterion=criterion, schedules=schedules,
        initial=result.initial, final=result.final, traces=result.traces,
        phase_rounds=result.phase_rounds, phase_snapshots=result.phase_snapshots,
        gossip_rounds=result.gossip_rounds,
    )
    run.report = evaluate_run(run)
    return run


def run_median(config: SimConfig, adversary: AdversaryArg = None,
               sampler: Optional[PartnerSampler] = None,
               initial: Optional[NodeSnapshot] = None,
               trace_level: TraceLevel = TraceLevel.SUMMARY) -> AlgorithmRun:
    """3-tournament for t iterations, then the K-sample vote when the schedule has one."""
    _require(config, AlgorithmKind.MEDIAN)
    schedule = analysis.median_schedule(config.n, config.epsilon, config.beta, config.gamma,
                                        overrides=config.overrides)
    return _execute(config, Criterion.MEDIAN, {"median": schedule}, median_phases(schedule),
                    adversary, sampler, initial, trace_level)


def run_quantile_shift(config: SimConfig, adversary: AdversaryArg = None,
                       sampler: Optional[PartnerSampler] = None,
                       initial: Optional[NodeSnapshot] = None,
                       trace_level: TraceLevel = TraceLevel.SUMMARY) -> AlgorithmRun:
    """2-tournament only; the report judges membership of the final values in M_t."""
    _require(config, AlgorithmKind.QUANTILE)
    schedule = analysis.quantile_schedule(config.phi, config.epsilon, config.beta)
    return _execute(config, Criterion.QUANTILE_SHIFT, {"quantile": schedule}, [shift_phase(schedule)],
                    adversary, sampler, initial, trace_level, phi=config.phi)


def run_quantile_full(config: SimConfig, adversary: AdversaryArg = None,
                      sampler: Optional[PartnerSampler] = None,
                      initial: Optional[NodeSnapshot] = None,
                      trace_level: TraceLevel = TraceLevel.SUMMARY) -> AlgorithmRun:
    """Shift the target quantile to the middle, then run the median with ε/8 (plain ε at φ = 1/2)."""
    _require(config, AlgorithmKind.QUANTILE)
    median_epsilon = analysis.composed_median_epsilon(config.phi, config.epsilon)
    if config.phi == 0.5:
        schedule = analysis.median_schedule(config.n, median_epsilon, config.beta, config.gamma,
                                            overrides=config.overrides)
        return _execute(config, Criterion.QUANTILE, {"median": schedule}, median_phases(schedule),
                        adversary, sampler, initial, trace_level, phi=config.phi)

    shift = analysis.quantile_schedule(config.phi, config.epsilon, config.beta)
    median = analysis.median_schedule(config.n, median_epsilon, config.beta, config.gamma,
                                      overrides=config.overrides)
    phases = [shift_phase(shift)] + median_phases(median)
    return _execute(config, Criterion.QUANTILE, {"quantile": shift, "median": median}, phases,
                    adversary, sampler, initial, trace_level, phi=config.phi)


def _run_mean_protocol(config: SimConfig, criterion: Criterion, adversary, sampler,
                       initial, trace_level) -> AlgorithmRun:
    schedule = analysis.mean_schedule(config.n, config.epsilon, config.beta, config.gamma,
                                      overrides=config.overrides)
    m_bound = config.value_ceiling
    return _execute(config, criterion, {"mean": schedule}, mean_phases(schedule, m_bound),
                    adversary, sampler, initial, trace_level)


def run_mean(config: SimConfig, adversary: AdversaryArg = None,
             sampler: Optional[PartnerSampler] = None,
             initial: Optional[NodeSnapshot] = None,
             trace_level: TraceLevel = TraceLevel.SUMMARY) -> AlgorithmRun:
    """Clipped pull-average for T rounds, then the K-sample vote when the schedule has one."""
    _require(config, AlgorithmKind.MEAN)
    return _run_mean_protocol(config, Criterion.MEAN, adversary, sampler, initial, trace_level)


def run_count(config: SimConfig, adversary: AdversaryArg = None,
              sampler: Optional[PartnerSampler] = None,
              initial: Optional[NodeSnapshot] = None,
              trace_level: TraceLevel = TraceLevel.SUMMARY) -> AlgorithmRun:
    """Approximate count of 1-valued nodes: the mean protocol with M = 1, read out as n·x_v."""
    _require(config, AlgorithmKind.COUNT)
    return _run_mean_protocol(config, Criterion.COUNT, adversary, sampler, initial, trace_level)


def count_estimates(run: AlgorithmRun) -> np.ndarray:
    return run.final.values * run.config.n


RUNNERS = {
    AlgorithmKind.MEDIAN: run_median,
    AlgorithmKind.QUANTILE: run_quantile_full,
    AlgorithmKind.MEAN: run_mean,
    AlgorithmKind.COUNT: run_count,
}


def run_algorithm(config: SimConfig, adversary: AdversaryArg = None,
                  quantile_stage: str = "full", **kwargs) -> AlgorithmRun:
    if config.algorithm == AlgorithmKind.QUANTILE and quantile_stage == "shift":
        return run_quantile_shift(config, adversary, **kwargs)
    return RUNNERS[config.algorithm](config, adversary, **kwargs)
