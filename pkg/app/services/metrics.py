"""Correctness predicates, L/M/H partitions, potentials and per-round statistics."""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from app.core.config import settings
from app.core.constants import Criterion, Direction
from app.services import analysis

logger = logging.getLogger(__name__)

_MEAN_SLACK = 1e-12


def rank_bounds(v, sorted_initial: np.ndarray) -> Tuple[Any, Any]:
    """(count_below, count_at_or_below) of ``v`` against the sorted initial values.

    ``v`` may be a scalar or an array; counts come back in the same shape.
    """
    below = np.searchsorted(sorted_initial, v, side="left")
    at_or_below = np.searchsorted(sorted_initial, v, side="right")
    if np.ndim(v) == 0:
        return int(below), int(at_or_below)
    return below, at_or_below


def order_window(phi: float, epsilon: float, n: int) -> Tuple[int, int]:
    """1-based order statistics ⌈(φ−ε)n⌉ and ⌊(φ+ε)n⌋ bounding a correct answer."""
    # decimal reading of the parameters, so 0.3 - 0.1 at n = 10 is exactly 2
    phi, epsilon = Fraction(str(float(phi))), Fraction(str(float(epsilon)))
    lo = math.ceil((phi - epsilon) * n)
    hi = math.floor((phi + epsilon) * n)
    return lo, hi


def quantile_flags(values: np.ndarray, sorted_initial: np.ndarray,
                   phi: float, epsilon: float) -> np.ndarray:
    lo, hi = order_window(phi, epsilon, sorted_initial.shape[0])
    below, at_or_below = rank_bounds(np.asarray(values), sorted_initial)
    return (at_or_below >= lo) & (below < hi)


def is_correct_quantile(v: float, phi: float, epsilon: float, initial) -> bool:
    """True iff ``v`` lies between the ⌈(φ−ε)n⌉-th and ⌊(φ+ε)n⌋-th initial order statistics."""
    sorted_initial = np.sort(np.asarray(initial, dtype=np.float64))
    lo, hi = order_window(phi, epsilon, sorted_initial.shape[0])
    below, at_or_below = rank_bounds(v, sorted_initial)
    return at_or_below >= lo and below < hi


def mean_flags(values: np.ndarray, true_mean: float, epsilon: float, m_bound: float) -> np.ndarray:
    tolerance = epsilon * m_bound * (1 + _MEAN_SLACK)
    return np.abs(np.asarray(values) - true_mean) <= tolerance


def is_correct_mean(v: float, true_mean: float, epsilon: float, m_bound: float) -> bool:
    return bool(mean_flags(np.asarray([v]), true_mean, epsilon, m_bound)[0])


def partition_lmh(values, sorted_initial: np.ndarray, phi: float, epsilon: float) -> Tuple[int, int, int]:
    """Sizes of L, M, H: current values below, inside or above the initial [φ−ε, φ+ε] window."""
    sorted_initial = np.asarray(sorted_initial)
    lo, hi = order_window(phi, epsilon, sorted_initial.shape[0])
    below, at_or_below = rank_bounds(np.asarray(values), sorted_initial)
    low = at_or_below < lo
    high = (below >= hi) & ~low
    n_low = int(np.count_nonzero(low))
    n_high = int(np.count_nonzero(high))
    return n_low, int(np.size(values)) - n_low - n_high, n_high


def phi_potential(values) -> float:
    """Σ over unordered pairs of (x_u − x_v)², evaluated as n·Σ(x − ψ/n)²."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0 or np.all(values == values[0]):
        return 0.0
    centered = values - values.mean()
    return float(values.size * np.dot(centered, centered))


def psi_sum(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    try:
        return math.fsum(values.tolist())
    except OverflowError:
        # adversarial deliveries clipped to the float range can overflow the exact sum
        return float(np.copysign(np.inf, values.sum(dtype=np.longdouble)))


@dataclass(frozen=True)
class RoundSummary:
    min: float
    median: float
    max: float
    phi: float
    psi: float
    low: Optional[int] = None
    mid: Optional[int] = None
    high: Optional[int] = None

    def to_dict(self):
        return {
            "min": self.min, "median": self.median, "max": self.max,
            "phi": self.phi, "psi": self.psi,
            "low": self.low, "mid": self.mid, "high": self.high,
        }


class RoundSummarizer:
    """Per-round statistics; the L/M/H split is tracked only for n ≤ LMH_SERIES_MAX_NODES."""

    def __init__(self, initial: Optional[np.ndarray] = None, phi: float = 0.5,
                 epsilon: Optional[float] = None, max_lmh_nodes: Optional[int] = None):
        self.phi = phi
        self.epsilon = epsilon
        limit = settings.LMH_SERIES_MAX_NODES if max_lmh_nodes is None else max_lmh_nodes
        self.sorted_initial = None
        if initial is not None and epsilon is not None and np.size(initial) <= limit:
            self.sorted_initial = np.sort(np.asarray(initial, dtype=np.float64))

    def __call__(self, values: np.ndarray) -> RoundSummary:
        low = mid = high = None
        if self.sorted_initial is not None:
            low, mid, high = partition_lmh(values, self.sorted_initial, self.phi, self.epsilon)
        return RoundSummary(
            min=float(values.min()),
            median=float(np.median(values)),
            max=float(values.max()),
            phi=phi_potential(values),
            psi=psi_sum(values),
            low=low, mid=mid, high=high,
        )


@dataclass
class EvalReport:
    criterion: Criterion
    flags: np.ndarray
    fraction_incorrect: float
    series: Dict[str, List[Optional[float]]] = field(default_factory=dict)
    theory: Dict[str, bool] = field(default_factory=dict)
    measurements: Dict[str, float] = field(default_factory=dict)
    off_spec: bool = False

    @property
    def n(self) -> int:
        return int(self.flags.shape[0])

    @property
    def passed(self) -> bool:
        return all(self.theory.values())

    def to_dict(self, include_flags: bool = False):
        data = {
            "criterion": self.criterion.value,
            "n": self.n,
            "incorrect": int(self.n - np.count_nonzero(self.flags)),
            "fraction_incorrect": self.fraction_incorrect,
            "theory": dict(self.theory),
            "measurements": dict(self.measurements),
            "series": {name: list(points) for name, points in self.series.items()},
            "off_spec": self.off_spec,
            "passed": self.passed,
        }
        if include_flags:
            data["flags"] = self.flags.astype(bool).tolist()
        return data


def report_from_flags(criterion: Criterion, flags: np.ndarray, **kwargs) -> EvalReport:
    flags = np.asarray(flags, dtype=bool)
    incorrect = flags.shape[0] - int(np.count_nonzero(flags))
    fraction = incorrect / flags.shape[0] if flags.shape[0] else 0.0
    return EvalReport(criterion=criterion, flags=flags, fraction_incorrect=fraction, **kwargs)


def _series(traces) -> Dict[str, List[Optional[float]]]:
    series: Dict[str, List[Optional[float]]] = {
        "phi": [], "psi": [], "low": [], "mid": [], "high": [],
    }
    for trace in traces:
        summary = trace.summary
        series["phi"].append(summary.phi)
        series["psi"].append(summary.psi)
        series["low"].append(summary.low)
        series["mid"].append(summary.mid)
        series["high"].append(summary.high)
    if all(point is None for point in series["mid"]):
        for name in ("low", "mid", "high"):
            del series[name]
    return series


def evaluate_run(run, config=None) -> EvalReport:
    """Judge each node's output against the initial snapshot with the run's criterion."""
    config = config or run.config
    criterion = run.criterion
    initial = run.initial.values
    final = run.final.values
    n = initial.shape[0]
    gamma = config.gamma

    theory: Dict[str, bool] = {}
    measurements: Dict[str, float] = {}

    if criterion in (Criterion.MEDIAN, Criterion.QUANTILE):
        phi = 0.5 if criterion == Criterion.MEDIAN else config.phi
        sorted_initial = np.sort(initial)
        flags = quantile_flags(final, sorted_initial, phi, config.epsilon)

    elif criterion == Criterion.QUANTILE_SHIFT:
        sorted_initial = np.sort(initial)
        flags = quantile_flags(final, sorted_initial, config.phi, config.epsilon)
        low, mid, high = partition_lmh(final, sorted_initial, config.phi, config.epsilon)
        eps = config.epsilon
        schedule = run.schedules.get("quantile")
        # the tracked tail is H for min-shifting and L for max-shifting
        tail = low if schedule is not None and schedule.direction == Direction.MAX else high
        tail_fraction = tail / n
        measurements["tail_fraction"] = tail_fraction
        measurements["mid_fraction"] = mid / n
        theory["tail_window"] = 0.5 - 15 * eps / 8 <= tail_fraction <= 0.5 - eps / 8
        theory["mid_mass"] = mid / n >= 2 * eps

    elif criterion in (Criterion.MEAN, Criterion.COUNT):
        m_bound = config.value_ceiling
        psi0 = psi_sum(initial)
        true_mean = psi0 / n
        flags = mean_flags(final, true_mean, config.epsilon, m_bound)
        schedule = run.schedules["mean"]
        phase1 = run.phase_snapshots.get("phase1", run.final).values
        phi_t = phi_potential(phase1)
        drift = abs(psi_sum(phase1) - psi0)
        outliers = 1.0 - float(np.count_nonzero(mean_flags(phase1, true_mean, config.epsilon, m_bound))) / n
        measurements["true_mean"] = true_mean
        measurements["phi_phase1"] = phi_t
        measurements["psi_drift"] = drift
        measurements["phase1_outlier_fraction"] = outliers
        theory["phi_contracted"] = phi_t <= 5 * schedule.eta * n * n * m_bound * m_bound
        theory["psi_drift"] = drift <= 3 * config.epsilon / 8 * n * m_bound
        theory["phase1_outliers"] = outliers <= analysis.mean_outlier_fraction(schedule.eta)

    else:
        raise ValueError(f"Unknown criterion: {criterion}")

    report = report_from_flags(
        criterion, flags,
        series=_series(run.traces),
        theory=theory,
        measurements=measurements,
        off_spec=config.off_spec,
    )
    if criterion != Criterion.QUANTILE_SHIFT:
        report.theory["within_gamma"] = report.fraction_incorrect <= gamma
    logger.info(f"Evaluated {criterion.value} run: fraction_incorrect={report.fraction_incorrect:.6f}")
    return report
