"""Built-in property and acceptance suites behind the ``verify`` command.

The analysis and model suites run in seconds. The acceptance suites reproduce
the desk-scale claims (millions of nodes, twenty seeds each) and take minutes.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from app.core.constants import AlgorithmKind, PushDirection, StrategyKind
from app.core.models import (
    DistinctPermutation,
    ScheduleOverrides,
    SimConfig,
    UniformReal,
    corruption_budget,
)
from app.services import analysis
from app.services.adversary import Adversary, StrategyDescriptor
from app.services.algorithms import run_algorithm, run_median, run_quantile_shift
from app.services.exceptions import ScheduleInfeasibleError
from app.services.harness import lowerbound_experiment

logger = logging.getLogger(__name__)


@dataclass
class Check:
    name: str
    passed: bool
    detail: Dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass
class SuiteReport:
    name: str
    checks: List[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def add(self, name: str, passed: bool, **detail) -> Check:
        check = Check(name, bool(passed), detail)
        self.checks.append(check)
        if not check.passed:
            logger.warning(f"Check {self.name}/{name} failed: {detail}")
        return check

    def to_dict(self):
        return {"name": self.name, "passed": self.passed,
                "checks": [check.to_dict() for check in self.checks]}


def median_schedule_grid() -> List[analysis.MedianSchedule]:
    schedules = []
    for n in (10 ** 4, 10 ** 5, 10 ** 6, 10 ** 7, 10 ** 8):
        for eps in (0.05, 0.1, 0.14, 0.2, 0.3, 0.4):
            for beta in (0.0, eps / 28, eps / 14):
                for gamma in (0.001, 0.01, 0.1, 0.25):
                    try:
                        schedules.append(analysis.median_schedule(n, eps, beta, gamma))
                    except ScheduleInfeasibleError:
                        continue
    return schedules


def quantile_schedule_grid() -> List[analysis.QuantileSchedule]:
    schedules = []
    phis = [0.05, 0.1, 0.2, 0.3, 0.4, 0.45]
    phis += [1 - phi for phi in phis]
    for phi in phis:
        for eps in (0.01, 0.02, 0.05, 0.1, 0.15, 1 / 6):
            for beta in (0.0, eps ** 2.5 / 32, eps ** 2.5 / 16):
                schedules.append(analysis.quantile_schedule(phi, eps, beta))
    return schedules


def analysis_suite() -> SuiteReport:
    """Closed forms against their defining sums and the bounds they must satisfy."""
    report = SuiteReport("analysis")

    grid = np.linspace(0.0, 1.0, 1000)
    worst = max(abs(analysis.binom_tail(3, 1, float(p)) - analysis.median_of_three_tail(float(p)))
                for p in grid)
    report.add("median_of_three_tail", worst <= 1e-12, max_error=worst)

    alphas = [a / 100 for a in range(1, 34)] + [1 / 3]
    violations = [
        (k, alpha) for k in range(1, 51) for alpha in alphas
        if analysis.binom_tail(2 * k + 1, k, 0.5 - alpha) > 0.5 - 13 / 12 * alpha + 1e-12
    ]
    report.add("majority_tail_bound", not violations, violations=violations[:5])

    medians = median_schedule_grid()
    bad = [
        s.to_dict() for s in medians
        if analysis.l_sequence(s.epsilon, s.beta, s.t)[-1] > s.gamma_prime
    ]
    report.add("low_fraction_reaches_gamma_prime", len(medians) >= 100 and not bad,
               schedules=len(medians), failures=bad[:3])

    quantiles = quantile_schedule_grid()
    drift, floor, length = [], [], []
    for s in quantiles:
        slack = 1 + 3 * s.epsilon / 4
        for i in (s.t - 1, s.t):
            if not s.hprime_seq[i] - 1e-15 <= s.h_seq[i] <= s.hprime_seq[i] * slack:
                drift.append((s.phi, s.epsilon, s.beta, i))
        if s.hprime_seq[s.t - 1] < 9 / 32:
            floor.append((s.phi, s.epsilon, s.beta))
        if s.t > 1.5 * math.log2(1 / s.epsilon):
            length.append((s.phi, s.epsilon, s.beta, s.t))
    report.add("tail_drift_bounds", len(quantiles) >= 100 and not drift,
               schedules=len(quantiles), failures=drift[:3])
    report.add("penultimate_tail_floor", not floor, failures=floor[:3])
    report.add("shift_iteration_count", not length, failures=length[:3])

    spread_bad = []
    for gamma in (0.001, 0.005, 0.01, 0.05):
        steps = math.floor(math.log2(math.log(1 / gamma) / math.log(4 * math.e)))
        if analysis.spread_sequence(steps)[-1] < gamma:
            spread_bad.append(gamma)
    report.add("spread_recursion_above_gamma", not spread_bad, failures=spread_bad)
    return report


def _median_config(n: int, seed: int, beta: float = 0.0, **kwargs) -> SimConfig:
    return SimConfig(n=n, epsilon=kwargs.pop("epsilon", 0.14), beta=beta,
                     gamma=kwargs.pop("gamma", 0.25), algorithm=AlgorithmKind.MEDIAN,
                     seed=seed, distribution=DistinctPermutation(), **kwargs)


def model_suite(n: int = 2000) -> SuiteReport:
    """Determinism, corruption budget and adversary-off equivalence on a small run."""
    report = SuiteReport("model")
    # δ is large at this n, so γ' is forced to keep the Phase-2 sample count defined
    config = _median_config(n, seed=7, beta=0.005, epsilon=0.14,
                            overrides=ScheduleOverrides(gamma_prime=0.02))
    attack = StrategyDescriptor(kind=StrategyKind.STATIC_EXTREME)

    first = run_median(config, attack)
    second = run_median(config, attack)
    same = [a.to_dict() for a in first.traces] == [b.to_dict() for b in second.traces]
    report.add("replay_identical", same and np.array_equal(first.final.values, second.final.values))

    budget = corruption_budget(config.beta, n)
    sizes = [int(trace.corrupted_set.shape[0]) for trace in first.traces]
    report.add("corruption_budget", max(sizes) <= budget, budget=budget, largest=max(sizes))

    # same schedule on both sides; only the adversary's own budget drops to zero
    off = run_median(config, StrategyDescriptor(kind=StrategyKind.NONE))
    zero = run_median(config, Adversary(attack, beta=0.0, n=n, seed=config.seed))
    report.add("adversary_off_equals_zero_beta",
               np.array_equal(off.final.values, zero.final.values))
    return report


def _seed_rate(outcomes: Sequence[bool]) -> float:
    return sum(outcomes) / len(outcomes)


def _fractions_within(configs, adversary, stage="full") -> List[bool]:
    outcomes = []
    for config in configs:
        run = run_algorithm(config, adversary, quantile_stage=stage)
        outcomes.append(run.report.fraction_incorrect <= config.gamma)
    return outcomes


def acceptance_suite(seeds: int = 20) -> SuiteReport:
    """Desk-scale reproductions of the correctness and lower-bound claims."""
    report = SuiteReport("acceptance")
    seed_list = range(1, seeds + 1)

    base = [_median_config(2_000_000, seed) for seed in seed_list]
    rate = _seed_rate(_fractions_within(base, None))
    report.add("median_honest", rate >= 0.95, pass_rate=rate)

    for kind in (StrategyKind.STICKY_EXTREME, StrategyKind.MEDIAN_PUSHER):
        configs = [c.model_copy(update={"beta": 0.001}) for c in base]
        descriptor = StrategyDescriptor(kind=kind, direction=PushDirection.UP)
        rate = _seed_rate(_fractions_within(configs, descriptor))
        report.add(f"median_{kind.value}", rate >= 0.95, pass_rate=rate)

    forced = [
        _median_config(100_000, seed, beta=0.001, gamma=0.001,
                       overrides=ScheduleOverrides(gamma_prime=0.02))
        for seed in seed_list
    ]
    rate = _seed_rate(_fractions_within(forced, StrategyDescriptor(kind=StrategyKind.STATIC_EXTREME)))
    report.add("median_phase2_forced", rate >= 0.9, pass_rate=rate)

    for beta, kind, bar in ((0.0, StrategyKind.NONE, 0.95), (1.9e-4, StrategyKind.STICKY_EXTREME, 0.9)):
        windows = []
        for seed in seed_list:
            config = SimConfig(n=1_000_000, epsilon=0.1, beta=beta, gamma=0.25, phi=0.3,
                               algorithm=AlgorithmKind.QUANTILE, seed=seed)
            run = run_quantile_shift(config, StrategyDescriptor(kind=kind))
            windows.append(run.report.passed)
        rate = _seed_rate(windows)
        report.add(f"quantile_shift_windows_beta_{beta}", rate >= bar, pass_rate=rate)

    composed = [
        SimConfig(n=2_000_000, epsilon=0.1, gamma=0.25, phi=0.3,
                  algorithm=AlgorithmKind.QUANTILE, seed=seed)
        for seed in seed_list
    ]
    rate = _seed_rate(_fractions_within(composed, None))
    report.add("quantile_composed", rate >= 0.95, pass_rate=rate)

    within, contracted, drift = [], [], []
    for seed in seed_list:
        config = SimConfig(n=1_000_000, epsilon=0.2, gamma=0.1, m_bound=1.0,
                           algorithm=AlgorithmKind.MEAN, seed=seed, distribution=UniformReal())
        run = run_algorithm(config)
        within.append(run.report.fraction_incorrect <= config.gamma)
        contracted.append(run.report.theory["phi_contracted"])
        drift.append(run.report.theory["psi_drift"])
    report.add("mean_within_gamma", _seed_rate(within) >= 0.95, pass_rate=_seed_rate(within))
    report.add("mean_potential", _seed_rate(contracted) >= 0.95, pass_rate=_seed_rate(contracted))
    report.add("mean_sum_drift", _seed_rate(drift) >= 0.95, pass_rate=_seed_rate(drift))

    inflated = [
        SimConfig(n=1_000_000, epsilon=0.2, beta=(0.2 / 100) ** 2.5, gamma=0.1, m_bound=1.0,
                  algorithm=AlgorithmKind.MEAN, seed=seed, distribution=UniformReal())
        for seed in seed_list
    ]
    rate = _seed_rate(_fractions_within(inflated, StrategyDescriptor(kind=StrategyKind.MEAN_INFLATOR)))
    report.add("mean_inflated", rate >= 0.95, pass_rate=rate)

    bound = lowerbound_experiment(100_000, 0.5, 0.01, 5, seeds, sticky=True)
    report.add("lower_bound_exceeds_gamma", bound.exceed_rate >= 0.9, exceed_rate=bound.exceed_rate)
    report.add("lower_bound_expectation",
               abs(bound.mean - bound.expected) <= 3 * bound.standard_error + 1e-12,
               mean=bound.mean, expected=bound.expected, standard_error=bound.standard_error)
    return report


SUITES: Dict[str, Callable[..., SuiteReport]] = {
    "analysis": analysis_suite,
    "model": model_suite,
    "acceptance": acceptance_suite,
}


def run_suites(full: bool = False, seeds: int = 20,
               names: Optional[Sequence[str]] = None) -> List[SuiteReport]:
    names = list(names or (["analysis", "model"] + (["acceptance"] if full else [])))
    reports = []
    for name in names:
        logger.info(f"Running verification suite {name}")
        suite = SUITES[name]
        reports.append(suite(seeds) if name == "acceptance" else suite())
    return reports
