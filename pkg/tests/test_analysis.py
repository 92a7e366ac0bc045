import math

import pytest
from hypothesis import example, given, settings, strategies as st

from app.core.constants import Direction
from app.core.models import ScheduleOverrides
from app.services import analysis
from app.services.exceptions import InvalidInputError, ScheduleInfeasibleError
from app.services.verification import analysis_suite


def test_binom_tail_examples():
    assert analysis.binom_tail(3, 1, 0.2) == pytest.approx(0.104, abs=1e-12)
    assert analysis.binom_tail(5, 5, 0.7) == 0.0
    assert analysis.binom_tail(4, 0, 1.0) == pytest.approx(1.0)
    assert analysis.binom_tail(10, 3, 0.0) == 0.0


def test_binom_tail_at_the_smallest_normal_probability():
    assert analysis.binom_tail(4, 2, 2.2250738585072014e-308) == 0.0
    reply = analysis.run_query({"op": "binom_tail", "args": {"n": 4, "k": 2, "p": 2.2250738585072014e-308}})
    assert reply["result"] == 0.0


def test_binom_tail_rejects_out_of_range_arguments():
    with pytest.raises(InvalidInputError):
        analysis.binom_tail(201, 10, 0.5)
    with pytest.raises(InvalidInputError):
        analysis.binom_tail(5, 6, 0.5)
    with pytest.raises(InvalidInputError):
        analysis.binom_tail(5, 2, 1.5)


@settings(max_examples=20, deadline=None)
@given(p=st.floats(min_value=0.0, max_value=1.0))
def test_median_of_three_matches_binomial_tail(p):
    assert abs(analysis.binom_tail(3, 1, p) - analysis.median_of_three_tail(p)) <= 1e-12


@settings(max_examples=20, deadline=None)
@given(k=st.integers(min_value=1, max_value=50),
       alpha=st.floats(min_value=1e-6, max_value=1 / 3))
def test_majority_tail_bound(k, alpha):
    assert analysis.binom_tail(2 * k + 1, k, 0.5 - alpha) <= 0.5 - 13 / 12 * alpha + 1e-12


@settings(max_examples=20, deadline=None)
@given(n=st.integers(min_value=1, max_value=60),
       p=st.floats(min_value=0.0, max_value=0.99), step=st.floats(min_value=0.0, max_value=0.01))
@example(n=4, p=0.0, step=2.2250738585072014e-308)
def test_binom_tail_is_monotone_in_p(n, p, step):
    k = n // 2
    assert analysis.binom_tail(n, k, p) <= analysis.binom_tail(n, k, p + step) + 1e-12


def test_l_sequence_examples():
    assert analysis.l_sequence(0.1, 0.0, 1) == pytest.approx([0.4, 0.352])
    assert analysis.l_sequence(0.1, 0.005, 1)[1] == pytest.approx(0.359215, abs=1e-6)
    assert analysis.l_sequence(0.5, 0.0, 1) == [0.0, 0.0]


def test_l_sequence_rejects_argument_outside_unit_interval():
    with pytest.raises(InvalidInputError):
        analysis.l_sequence(0.1, 0.7, 1)


def test_median_schedules_match_ground_truth(ground_truth):
    for case in ground_truth["median_schedules"]:
        s = analysis.median_schedule(case["n"], case["epsilon"], case["beta"], case["gamma"])
        assert s.delta == pytest.approx(case["delta"], abs=1e-4)
        assert (s.t, s.t_drift, s.t_squaring) == (case["t"], case["t_drift"], case["t_squaring"]), case
        assert s.k == case["k"], case
        assert s.gossip_rounds == 3 * s.t + (s.k or 0)
        assert not s.off_spec


def test_forced_gamma_prime_schedule(ground_truth):
    case = ground_truth["forced_median_schedule"]
    s = analysis.median_schedule(case["n"], case["epsilon"], case["beta"], case["gamma"],
                                 overrides=ScheduleOverrides(gamma_prime=case["gamma_prime"]))
    assert (s.t, s.k) == (case["t"], case["k"])
    assert s.off_spec


def test_median_schedule_infeasible_cases():
    with pytest.raises(ScheduleInfeasibleError):
        analysis.median_schedule(10 ** 6, 0.1, 0.1, 0.1)
    with pytest.raises(ScheduleInfeasibleError):
        analysis.median_schedule(1000, 0.14, 0.0, 0.25)


def test_median_iterations_drive_low_fraction_below_gamma_prime():
    for s in (analysis.median_schedule(10 ** 7, 0.14, 0.001, 0.001),
              analysis.median_schedule(10 ** 8, 0.05, 0.05 / 14, 0.1)):
        assert s.t >= 2
        assert analysis.l_sequence(s.epsilon, s.beta, s.t)[-1] <= s.gamma_prime


def test_quantile_schedule_matches_ground_truth(ground_truth):
    case = ground_truth["quantile_schedule"]
    s = analysis.quantile_schedule(case["phi"], case["epsilon"], case["beta"])
    assert s.threshold == pytest.approx(case["threshold"])
    assert list(s.hprime_seq) == pytest.approx(case["hprime_seq"])
    assert list(s.delta_seq) == pytest.approx(case["delta_seq"], abs=1e-6)
    assert s.t == case["t"]
    assert s.direction == Direction.MIN
    assert s.gossip_rounds == 2 * s.t


def test_quantile_schedule_is_mirrored_above_one_half():
    low = analysis.quantile_schedule(0.25, 0.1, 0.0)
    high = analysis.quantile_schedule(0.75, 0.1, 0.0)
    assert high.direction == Direction.MAX
    assert high.hprime_seq[0] == pytest.approx(0.65)
    assert high.t == low.t


def test_quantile_schedule_at_one_half_is_empty():
    s = analysis.quantile_schedule(0.5, 0.1, 0.0)
    assert s.t == 0 and s.direction is None


@pytest.mark.parametrize("phi,epsilon", [(0.05, 0.01), (0.3, 0.1), (0.45, 1 / 6), (0.9, 0.05)])
def test_quantile_schedule_invariants(phi, epsilon):
    s = analysis.quantile_schedule(phi, epsilon, epsilon ** 2.5 / 16)
    assert all(d == 1.0 for d in s.delta_seq[:-1])
    assert 0.0 < s.delta_seq[-1] <= 1.0
    assert s.hprime_seq[s.t] <= s.threshold < s.hprime_seq[s.t - 1]
    assert s.t <= 1.5 * math.log2(1 / epsilon)


def test_mean_schedules_match_ground_truth(ground_truth):
    for case in ground_truth["mean_schedules"]:
        s = analysis.mean_schedule(case["n"], case["epsilon"], case["beta"], case["gamma"])
        assert s.delta == pytest.approx(case["delta"], rel=1e-4)
        assert s.eta == pytest.approx(case["eta"], rel=1e-4)
        assert (s.t_rounds, s.k) == (case["t_rounds"], case["k"])
        assert s.gossip_rounds == 2 * s.t_rounds + s.k


def test_mean_schedule_without_phase2_when_eta_sits_at_floor():
    s = analysis.mean_schedule(10 ** 12, 0.9, 0.0, 0.9)
    assert s.eta == pytest.approx(s.eta_floor)
    assert s.k is None
    assert s.eta_within_bound


def test_mean_schedule_infeasible_for_large_beta():
    with pytest.raises(ScheduleInfeasibleError):
        analysis.mean_schedule(10 ** 6, 0.5, 0.05, 0.1)


def test_mean_outlier_fraction():
    assert analysis.mean_outlier_fraction(1e-5) == pytest.approx(0.05)


def test_lower_bounds_match_ground_truth(ground_truth):
    for case in ground_truth["lower_bounds"]["direct"]:
        assert analysis.lower_bound_direct(case["beta"], case["gamma"]) == pytest.approx(case["threshold"], abs=1e-5)
    for case in ground_truth["lower_bounds"]["spread"]:
        assert analysis.lower_bound_spread(case["epsilon"], case["gamma"]) == pytest.approx(
            case["threshold"], abs=case["tolerance"])


def test_direct_lower_bound_can_be_trivial():
    assert analysis.lower_bound_direct(0.1, 0.2) < 1


def test_lower_bound_domains():
    with pytest.raises(InvalidInputError):
        analysis.lower_bound_direct(0.0, 0.01)
    with pytest.raises(InvalidInputError):
        analysis.lower_bound_spread(0.2, 0.01)
    with pytest.raises(InvalidInputError):
        analysis.lower_bound_spread(0.1, 0.5)


def test_spread_sequence():
    z = analysis.spread_sequence(2)
    assert z[0] == 0.5
    assert z[1] == pytest.approx(0.25 / (2 * math.e))
    assert z[2] == pytest.approx(z[1] ** 2 / (2 * math.e))


def test_predict_by_name():
    assert analysis.predict("binom_tail", {"n": 3, "k": 1, "p": 0.2}) == pytest.approx(0.104)
    schedule = analysis.predict("median_schedule", {"n": 10 ** 7, "epsilon": 0.14, "beta": 0.001, "gamma": 0.001})
    assert schedule["t"] == 144 and schedule["k"] == 210


def test_predict_rejects_unknown_ops_and_overrides():
    with pytest.raises(InvalidInputError):
        analysis.predict("nope", {})
    with pytest.raises(InvalidInputError):
        analysis.predict("median_schedule", {"n": 10, "epsilon": 0.1, "beta": 0, "gamma": 0.1,
                                             "overrides": {"k": 3}})
    with pytest.raises(InvalidInputError):
        analysis.predict("binom_tail", {"trials": 3})


def test_run_query_reports_errors_inline():
    ok = analysis.run_query({"op": "lower_bound_direct", "args": {"beta": 0.1, "gamma": 0.01}})
    assert ok["result"] == pytest.approx(1.69897, abs=1e-5)
    failed = analysis.run_query({"op": "lower_bound_direct", "args": {"beta": 0.0, "gamma": 0.01}})
    assert failed["error"]["error"] == "InvalidInputError"


def test_operation_signatures_hide_overrides():
    signatures = analysis.operation_signatures()
    assert signatures["median_schedule"] == ["n", "epsilon", "beta", "gamma"]
    assert "overrides" not in signatures["mean_schedule"]


def test_analysis_suite_passes():
    report = analysis_suite()
    assert report.passed, [c.to_dict() for c in report.checks if not c.passed]
