import numpy as np
import pytest

from app.core.constants import AlgorithmKind, Criterion, StrategyKind, TraceLevel
from app.core.models import (
    Constant,
    DistinctPermutation,
    Explicit,
    ScheduleOverrides,
    SimConfig,
    TwoPoint,
    UniformReal,
)
from app.services.adversary import Adversary, StrategyDescriptor
from app.services.algorithms import (
    count_estimates,
    run_algorithm,
    run_count,
    run_mean,
    run_median,
    run_quantile_full,
    run_quantile_shift,
)
from app.services.exceptions import InvalidInputError

FORCED = ScheduleOverrides(gamma_prime=0.02)


def _median(n=20_000, **kwargs):
    kwargs.setdefault("overrides", FORCED)
    return SimConfig(n=n, epsilon=kwargs.pop("epsilon", 0.14), gamma=kwargs.pop("gamma", 0.05),
                     algorithm=AlgorithmKind.MEDIAN, **kwargs)


def test_median_hand_trace_on_five_nodes(scripted_sampler):
    config = SimConfig(n=5, epsilon=0.4, gamma=0.25, algorithm=AlgorithmKind.MEDIAN,
                       distribution=Explicit(values=[5, 1, 4, 2, 3]),
                       overrides=ScheduleOverrides(gamma_prime=0.5, k=1))
    run = run_median(config, sampler=scripted_sampler(lambda r, s, v: v + s))
    assert run.final.values.tolist() == [3.0] * 5
    assert run.report.fraction_incorrect == 0.0
    schedule = run.schedules["median"]
    assert run.engine_rounds == schedule.t + 1
    assert run.gossip_rounds == 3 * schedule.t + 1


@pytest.mark.parametrize("config", [
    _median(n=2000, distribution=Constant(c=7.0)),
    SimConfig(n=2000, epsilon=0.1, gamma=0.25, phi=0.3, algorithm=AlgorithmKind.QUANTILE,
              distribution=Constant(c=7.0), overrides=FORCED),
    SimConfig(n=2000, epsilon=0.2, gamma=0.1, m_bound=10.0, algorithm=AlgorithmKind.MEAN,
              distribution=Constant(c=7.0)),
])
def test_constant_inputs_are_returned_exactly(config):
    run = run_algorithm(config)
    assert (run.final.values == 7.0).all()
    assert run.report.fraction_incorrect == 0.0


def test_median_under_static_attack_stays_within_gamma():
    config = _median(beta=0.005, seed=3)
    run = run_median(config, StrategyDescriptor(kind=StrategyKind.STATIC_EXTREME))
    assert run.report.fraction_incorrect <= config.gamma
    assert run.report.off_spec
    assert run.schedules["median"].k == 39
    assert max(t.corrupted_set.shape[0] for t in run.traces) <= 100


def test_phase2_outputs_come_from_phase1_values():
    config = _median(n=5000, seed=4)
    run = run_median(config)
    assert np.isin(run.final.values, run.phase_snapshots["phase1"].values).all()


def test_disabled_adversary_equals_zero_beta():
    config = _median(n=5000, beta=0.005, seed=5)
    off = run_median(config, StrategyDescriptor(kind=StrategyKind.NONE))
    zero = run_median(config, Adversary(StrategyDescriptor(kind=StrategyKind.STATIC_EXTREME),
                                        beta=0.0, n=config.n, seed=config.seed))
    assert np.array_equal(off.final.values, zero.final.values)
    assert [t.to_dict() for t in off.traces] == [t.to_dict() for t in zero.traces]


def test_quantile_shift_only_moves_initial_values():
    config = SimConfig(n=10_000, epsilon=0.1, gamma=0.25, phi=0.3, algorithm=AlgorithmKind.QUANTILE,
                       seed=6, distribution=DistinctPermutation())
    run = run_quantile_shift(config)
    assert run.criterion == Criterion.QUANTILE_SHIFT
    assert np.isin(run.final.values, run.initial.values).all()
    assert run.gossip_rounds == 2 * run.schedules["quantile"].t
    assert {"tail_window", "mid_mass"} <= set(run.report.theory)


def test_first_shift_iteration_always_pulls_twice():
    config = SimConfig(n=500, epsilon=0.1, gamma=0.25, phi=0.25, algorithm=AlgorithmKind.QUANTILE, seed=1)
    run = run_quantile_shift(config, trace_level=TraceLevel.EDGES)
    assert len(run.traces[0].edges) == 2 * config.n
    assert len(run.traces[1].edges) < 2 * config.n


def test_full_quantile_at_one_half_runs_the_median_only():
    config = SimConfig(n=2000, epsilon=0.1, gamma=0.25, phi=0.5, algorithm=AlgorithmKind.QUANTILE,
                       overrides=FORCED)
    run = run_quantile_full(config)
    assert set(run.schedules) == {"median"}
    assert run.criterion == Criterion.QUANTILE


def test_full_quantile_runs_the_median_at_epsilon_over_eight():
    config = SimConfig(n=2000, epsilon=0.1, gamma=0.05, phi=0.3, algorithm=AlgorithmKind.QUANTILE,
                       overrides=FORCED)
    run = run_quantile_full(config)
    assert run.schedules["median"].epsilon == pytest.approx(0.0125)
    assert list(run.phase_rounds) == ["shift", "phase1", "phase2"]


def test_composed_beta_limit_fits_the_median_stage():
    epsilon = 0.1
    assert epsilon ** 2.5 / 16 <= (epsilon / 8) / 14


def test_mean_outputs_stay_in_range_and_close():
    config = SimConfig(n=20_000, epsilon=0.2, gamma=0.1, m_bound=1.0, algorithm=AlgorithmKind.MEAN,
                       seed=7, distribution=UniformReal())
    run = run_mean(config)
    values = run.final.values
    assert ((values >= 0.0) & (values <= 1.0)).all()
    assert run.report.fraction_incorrect <= config.gamma
    assert run.report.theory["psi_drift"]
    assert run.gossip_rounds == 2 * run.schedules["mean"].t_rounds + run.schedules["mean"].k


def test_count_estimates_the_number_of_ones():
    config = SimConfig(n=20_000, epsilon=0.2, gamma=0.1, m_bound=1.0, algorithm=AlgorithmKind.COUNT,
                       seed=8, distribution=TwoPoint(fraction=0.3))
    run = run_count(config)
    assert run.report.fraction_incorrect == 0.0
    estimates = count_estimates(run)
    assert (np.abs(estimates - 6000) <= 0.2 * config.n).all()


def test_runner_rejects_mismatched_or_invalid_configs():
    mean = SimConfig(n=2000, epsilon=0.2, gamma=0.1, m_bound=1.0, algorithm=AlgorithmKind.MEAN)
    with pytest.raises(InvalidInputError):
        run_median(mean)
    bad = _median(n=2000, beta=0.05)
    with pytest.raises(InvalidInputError):
        run_median(bad)


def test_run_summary_shape():
    run = run_median(_median(n=2000, seed=2))
    data = run.to_dict(include_traces=True)
    assert data["engine_rounds"] == len(data["traces"])
    assert data["phase_boundaries"]["phase2"] == data["engine_rounds"]
    assert sum(data["output_histogram"]["counts"]) == 2000
    assert data["off_spec"] is True
