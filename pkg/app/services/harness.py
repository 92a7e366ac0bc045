"""Experiment plans, seeded sweeps, the lower-bound experiment and result files."""

import csv
import itertools
import json
import logging
import multiprocessing
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from app.core.config import settings
from app.core.constants import (
    AlgorithmKind,
    EDGE_CSV_COLUMNS,
    RESULT_CSV_COLUMNS,
    TRACE_CSV_COLUMNS,
    Criterion,
    OutputFormat,
    RowStatus,
    StrategyKind,
    StreamDomain,
    TraceLevel,
)
from app.core.models import NodeSnapshot, SimConfig, corruption_budget, hard_violations
from app.services import analysis
from app.services.adversary import Adversary, AdversaryContext, StrategyDescriptor
from app.services.algorithms import AlgorithmRun, run_algorithm
from app.services.exceptions import (
    InvalidInputError,
    PlanLoadError,
    ResultWriteError,
    ServiceException,
)
from app.services.metrics import phi_potential
from app.services.rng import node_integers

logger = logging.getLogger(__name__)

_PLAN_MODEL_CONFIG = ConfigDict(extra="forbid", allow_inf_nan=False, frozen=True)

QuantileStage = Literal["full", "shift"]


class SweepAxes(BaseModel):
    """Lists of values to sweep; an absent axis keeps the base config's value."""

    model_config = _PLAN_MODEL_CONFIG
    n: Optional[List[int]] = None
    epsilon: Optional[List[float]] = None
    beta: Optional[List[float]] = None
    gamma: Optional[List[float]] = None
    phi: Optional[List[float]] = None
    strategy: Optional[List[StrategyDescriptor]] = None


class OutputSpec(BaseModel):
    model_config = _PLAN_MODEL_CONFIG
    dir: str = Field(default_factory=lambda: settings.OUTPUT_DIR)
    format: OutputFormat = OutputFormat.CSV


class ExperimentPlan(BaseModel):
    model_config = _PLAN_MODEL_CONFIG

    name: str = "plan"
    base: SimConfig
    adversary: StrategyDescriptor = Field(default_factory=StrategyDescriptor)
    sweep: SweepAxes = Field(default_factory=SweepAxes)
    seeds: Union[List[int], int] = 1
    quantile_stage: QuantileStage = "full"
    outputs: OutputSpec = Field(default_factory=OutputSpec)

    @field_validator("seeds")
    @classmethod
    def _at_least_one_distinct_seed(cls, seeds):
        if isinstance(seeds, int):
            if seeds < 1:
                raise ValueError("seed count must be at least 1")
        elif not seeds:
            raise ValueError("seed list must not be empty")
        elif len(set(seeds)) != len(seeds):
            raise ValueError("seed list must not repeat a seed")
        return seeds

    def seed_list(self) -> List[int]:
        if isinstance(self.seeds, int):
            return list(range(1, self.seeds + 1))
        return list(self.seeds)

    def points(self) -> List["SweepPoint"]:
        base, sweep = self.base, self.sweep
        axes = [
            ("n", sweep.n or [base.n]),
            ("epsilon", sweep.epsilon or [base.epsilon]),
            ("beta", sweep.beta or [base.beta]),
            ("gamma", sweep.gamma or [base.gamma]),
            ("phi", sweep.phi or [base.phi]),
        ]
        strategies = sweep.strategy or [self.adversary]
        points = []
        names = [name for name, _ in axes]
        for point_id, combo in enumerate(itertools.product(*(values for _, values in axes), strategies)):
            update = dict(zip(names, combo[:-1]))
            config = SimConfig.model_validate({**base.model_dump(), **update})
            points.append(SweepPoint(point_id, config, combo[-1]))
        return points


@dataclass(frozen=True)
class SweepPoint:
    point_id: int
    config: SimConfig
    adversary: StrategyDescriptor


def load_plan(path) -> ExperimentPlan:
    """Parse a plan file; malformed JSON and unknown or invalid fields raise PlanLoadError."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise PlanLoadError(f"Cannot read plan: {e}", {"path": str(path)}) from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise PlanLoadError(
            message=f"Malformed plan: {e.msg}",
            details={"path": str(path), "line": e.lineno, "column": e.colno, "position": e.pos},
        ) from e
    return parse_plan(data, source=str(path))


def parse_plan(data, source: str = "<memory>") -> ExperimentPlan:
    try:
        return ExperimentPlan.model_validate(data)
    except ValidationError as e:
        errors = [
            {"path": "/".join(str(part) for part in err["loc"]), "message": err["msg"]}
            for err in e.errors()
        ]
        raise PlanLoadError(
            message=f"Plan failed validation with {len(errors)} error(s)",
            details={"source": source, "errors": errors},
        ) from e


def plan_to_dict(plan: ExperimentPlan) -> Dict:
    return plan.model_dump(mode="json")


@dataclass
class ResultRow:
    point_id: int
    seed: int
    algorithm: str
    n: int
    epsilon: float
    beta: float
    gamma: float
    phi: Optional[float]
    strategy: str
    status: str = RowStatus.OK.value
    reason: str = ""
    fraction_incorrect: Optional[float] = None
    engine_rounds: Optional[int] = None
    gossip_rounds: Optional[int] = None
    phi_final: Optional[float] = None
    psi_drift: Optional[float] = None
    passed: Optional[bool] = None
    off_spec: bool = False
    wall_time: float = field(default=0.0, compare=False)

    @property
    def key(self) -> str:
        return f"{self.point_id}:{self.seed}"

    def to_dict(self) -> Dict:
        data = asdict(self)
        data.pop("wall_time")
        return {column: data[column] for column in RESULT_CSV_COLUMNS}

    @classmethod
    def from_dict(cls, data: Dict) -> "ResultRow":
        return cls(**{column: data[column] for column in RESULT_CSV_COLUMNS})


def parse_row_key(key: str) -> Tuple[int, int]:
    try:
        point_id, seed = key.split(":")
        return int(point_id), int(seed)
    except ValueError as e:
        raise InvalidInputError("Row keys look like <point_id>:<seed>", {"received": key}) from e


def _base_row(point: SweepPoint, seed: int) -> ResultRow:
    config = point.config
    return ResultRow(
        point_id=point.point_id, seed=seed, algorithm=config.algorithm.value,
        n=config.n, epsilon=config.epsilon, beta=config.beta, gamma=config.gamma,
        phi=config.phi, strategy=point.adversary.kind.value, off_spec=config.off_spec,
    )


def row_from_run(row: ResultRow, run: AlgorithmRun) -> ResultRow:
    report = run.report
    row.fraction_incorrect = report.fraction_incorrect
    row.engine_rounds = run.engine_rounds
    row.gossip_rounds = run.gossip_rounds
    row.passed = report.passed
    if run.criterion in (Criterion.MEAN, Criterion.COUNT):
        row.phi_final = report.measurements["phi_phase1"]
        row.psi_drift = report.measurements["psi_drift"]
    else:
        row.phi_final = phi_potential(run.final.values)
    return row


def run_point(point: SweepPoint, seed: int, quantile_stage: QuantileStage = "full") -> ResultRow:
    """One (point, seed) row; failures become error rows instead of propagating."""
    row = _base_row(point, seed)
    config = point.config.model_copy(update={"seed": seed})
    violations = hard_violations(config)
    if violations:
        row.status = RowStatus.SKIPPED.value
        row.reason = "; ".join(v.message for v in violations)
        return row

    start = time.perf_counter()
    try:
        run = run_algorithm(config, point.adversary, quantile_stage=quantile_stage)
        row_from_run(row, run)
    except ServiceException as e:
        logger.warning(f"Row {row.key} failed: {e.message}")
        row.status = RowStatus.ERROR.value
        row.reason = e.message
    except Exception as e:
        logger.exception(f"Unexpected error in row {row.key}: {str(e)}")
        row.status = RowStatus.ERROR.value
        row.reason = str(e)
    row.wall_time = time.perf_counter() - start
    return row


def _run_task(task) -> ResultRow:
    point, seed, stage = task
    return run_point(point, seed, stage)


@dataclass
class PointSummary:
    point_id: int
    rows: int
    ok: int
    skipped: int
    errors: int
    gamma: float
    max: Optional[float] = None
    mean: Optional[float] = None
    median: Optional[float] = None
    q90: Optional[float] = None
    pass_rate: Optional[float] = None
    theory_pass_rate: Optional[float] = None

    def to_dict(self):
        return asdict(self)


def aggregate(rows: Sequence[ResultRow], quantile_stage: QuantileStage = "full") -> List[PointSummary]:
    """Per-point worst seed, spread of fraction_incorrect and share of seeds within γ.

    Shift-stage quantile rows have no γ target, so their pass_rate stays None;
    theory_pass_rate carries the shift windows instead.
    """
    summaries = []
    for point_id, group in itertools.groupby(sorted(rows, key=lambda r: (r.point_id, r.seed)),
                                             key=lambda r: r.point_id):
        group = list(group)
        ok = [r for r in group if r.status == RowStatus.OK.value]
        summary = PointSummary(
            point_id=point_id, rows=len(group), ok=len(ok),
            skipped=sum(r.status == RowStatus.SKIPPED.value for r in group),
            errors=sum(r.status == RowStatus.ERROR.value for r in group),
            gamma=group[0].gamma,
        )
        if ok:
            fractions = np.array([r.fraction_incorrect for r in ok])
            summary.max = float(fractions.max())
            summary.mean = float(fractions.mean())
            summary.median = float(np.median(fractions))
            summary.q90 = float(np.quantile(fractions, 0.9))
            if not (quantile_stage == "shift" and group[0].algorithm == AlgorithmKind.QUANTILE.value):
                summary.pass_rate = float(np.mean(fractions <= summary.gamma))
            summary.theory_pass_rate = float(np.mean([bool(r.passed) for r in ok]))
        summaries.append(summary)
    return summaries


@dataclass
class PlanResult:
    rows: List[ResultRow]
    summaries: List[PointSummary]

    def to_dict(self):
        return {
            "rows": [row.to_dict() for row in self.rows],
            "summaries": [summary.to_dict() for summary in self.summaries],
        }


class ExperimentRunner:
    """Runs every (sweep point, seed) pair of a plan, optionally across worker processes."""

    def __init__(self, parallel: Optional[int] = None):
        self.logger = logging.getLogger(__name__)
        self.parallel = max(1, parallel or settings.DEFAULT_PARALLEL)

    def run_plan(self, plan: ExperimentPlan) -> PlanResult:
        points = plan.points()
        seeds = plan.seed_list()
        tasks = [(point, seed, plan.quantile_stage) for point in points for seed in seeds]
        self.logger.info(f"Plan {plan.name}: {len(points)} points x {len(seeds)} seeds, "
                         f"{self.parallel} worker(s)")

        if self.parallel > 1 and len(tasks) > 1:
            with multiprocessing.Pool(self.parallel) as pool:
                rows = list(pool.imap_unordered(_run_task, tasks))
        else:
            rows = [_run_task(task) for task in tasks]

        rows.sort(key=lambda r: (r.point_id, r.seed))
        skipped = sum(r.status == RowStatus.SKIPPED.value for r in rows)
        if skipped:
            self.logger.info(f"Plan {plan.name}: {skipped} row(s) skipped by validation")
        return PlanResult(rows=rows, summaries=aggregate(rows, plan.quantile_stage))

    def replay(self, plan: ExperimentPlan, key: str,
               trace_level: TraceLevel = TraceLevel.SUMMARY) -> AlgorithmRun:
        """Re-run the row ``<point_id>:<seed>`` and return the full run with traces."""
        point_id, seed = parse_row_key(key)
        points = plan.points()
        if not 0 <= point_id < len(points):
            raise InvalidInputError("Unknown sweep point", {"point_id": point_id, "points": len(points)})
        point = points[point_id]
        config = point.config.model_copy(update={"seed": seed})
        self.logger.info(f"Replaying row {key}")
        return run_algorithm(config, point.adversary, quantile_stage=plan.quantile_stage,
                             trace_level=trace_level)


def run_plan(plan: ExperimentPlan, parallel: Optional[int] = None) -> PlanResult:
    return ExperimentRunner(parallel).run_plan(plan)


@dataclass
class LowerBoundResult:
    n: int
    beta: float
    gamma: float
    rounds: int
    sticky: bool
    threshold: float
    applies: bool
    skipped: bool = False
    vacuous: bool = False
    seeds: List[int] = field(default_factory=list)
    fractions: List[float] = field(default_factory=list)
    exceeds_gamma: List[bool] = field(default_factory=list)
    expected: Optional[float] = None

    @property
    def mean(self) -> Optional[float]:
        return float(np.mean(self.fractions)) if self.fractions else None

    @property
    def standard_error(self) -> Optional[float]:
        if len(self.fractions) < 2:
            return None
        return float(np.std(self.fractions, ddof=1) / np.sqrt(len(self.fractions)))

    @property
    def exceed_rate(self) -> Optional[float]:
        return float(np.mean(self.exceeds_gamma)) if self.exceeds_gamma else None

    def to_dict(self):
        data = asdict(self)
        data.update(mean=self.mean, standard_error=self.standard_error, exceed_rate=self.exceed_rate)
        return data


def isolated_fraction(n: int, beta: float, rounds: int, seed: int, sticky: bool = True) -> float:
    """Fraction of nodes all of whose pulls over ``rounds`` rounds hit a corrupted node."""
    kind = StrategyKind.STICKY_EXTREME if sticky else StrategyKind.STATIC_EXTREME
    adversary = Adversary(StrategyDescriptor(kind=kind), beta=beta, n=n, seed=seed)
    snapshot = NodeSnapshot(np.zeros(n))
    isolated = np.ones(n, dtype=bool)
    for round_index in range(rounds):
        plan = adversary.begin_round(AdversaryContext(round_index, snapshot, beta, n))
        targets = node_integers(seed, round_index, 0, n, 0, n, StreamDomain.LOWER_BOUND)
        isolated &= plan.hits(targets)
    return float(np.count_nonzero(isolated)) / n


def lowerbound_experiment(n: int, beta: float, gamma: float, rounds: int,
                          seeds: Union[Sequence[int], int], sticky: bool = True) -> LowerBoundResult:
    """Direct-contact experiment: who has heard only corrupted messages after ``rounds`` rounds."""
    if beta <= 0:
        raise InvalidInputError(
            message="beta must be positive; with beta = 0 no node only hears corrupted messages",
            details={"beta": beta},
        )
    if n < 1 or rounds < 0:
        raise InvalidInputError("n must be positive and rounds non-negative", {"n": n, "rounds": rounds})
    seed_list = list(range(1, seeds + 1)) if isinstance(seeds, int) else list(seeds)

    threshold = analysis.lower_bound_direct(beta, gamma)
    result = LowerBoundResult(
        n=n, beta=beta, gamma=gamma, rounds=rounds, sticky=sticky,
        threshold=threshold, applies=rounds < threshold, seeds=seed_list,
        expected=(corruption_budget(beta, n) / n) ** rounds,
    )
    if threshold < 1:
        logger.info(f"Lower bound threshold {threshold:.3f} < 1; claim holds trivially, skipping")
        result.skipped = True
        return result
    if rounds == 0:
        result.vacuous = True

    for seed in seed_list:
        fraction = isolated_fraction(n, beta, rounds, seed, sticky)
        result.fractions.append(fraction)
        result.exceeds_gamma.append(fraction > gamma)
    logger.info(f"Lower bound experiment: mean fraction {result.mean} over {len(seed_list)} seeds")
    return result


def _write_csv(path: Path, columns: Sequence[str], rows: Sequence[Dict]):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def emit_results(rows: Sequence[ResultRow], formats: OutputFormat, path,
                 summaries: Optional[Sequence[PointSummary]] = None) -> List[Path]:
    """Write results.csv and/or results.jsonl, plus timings.csv and summary.json; returns the paths."""
    if not rows:
        raise InvalidInputError("No result rows to write")
    formats = OutputFormat(formats)
    out_dir = Path(path)
    ordered = sorted(rows, key=lambda r: (r.point_id, r.seed))
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if formats in (OutputFormat.CSV, OutputFormat.BOTH):
            target = out_dir / "results.csv"
            _write_csv(target, RESULT_CSV_COLUMNS, [row.to_dict() for row in ordered])
            written.append(target)
        if formats in (OutputFormat.JSONL, OutputFormat.BOTH):
            target = out_dir / "results.jsonl"
            with open(target, "w") as f:
                for row in ordered:
                    f.write(json.dumps(row.to_dict()) + "\n")
            written.append(target)
        timings = out_dir / "timings.csv"
        _write_csv(timings, ["point_id", "seed", "wall_time"],
                   [{"point_id": r.point_id, "seed": r.seed, "wall_time": r.wall_time} for r in ordered])
        written.append(timings)
        if summaries is not None:
            target = out_dir / "summary.json"
            target.write_text(json.dumps([s.to_dict() for s in summaries], indent=2) + "\n")
            written.append(target)
    except OSError as e:
        raise ResultWriteError(f"Cannot write results: {e}", {"path": str(out_dir)}) from e
    logger.info(f"Wrote {len(ordered)} rows to {out_dir}")
    return written


def read_results_jsonl(path) -> List[ResultRow]:
    with open(path) as f:
        return [ResultRow.from_dict(json.loads(line)) for line in f if line.strip()]


def write_trace_csv(run: AlgorithmRun, path) -> Path:
    """One row per round with the round's summary statistics."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        _write_csv(path, TRACE_CSV_COLUMNS, [trace.to_csv_row() for trace in run.traces])
    except OSError as e:
        raise ResultWriteError(f"Cannot write trace: {e}", {"path": str(path)}) from e
    return path


def write_edge_csv(run: AlgorithmRun, path) -> Optional[Path]:
    """All captured pull edges; None when the run kept summaries only."""
    if all(trace.edges is None for trace in run.traces):
        return None
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=EDGE_CSV_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for trace in run.traces:
                if trace.edges is not None:
                    writer.writerows(trace.edges.to_rows(trace.round_index))
    except OSError as e:
        raise ResultWriteError(f"Cannot write edges: {e}", {"path": str(path)}) from e
    return path
