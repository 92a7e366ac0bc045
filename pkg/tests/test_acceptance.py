import pytest

from app.services.verification import acceptance_suite


@pytest.fixture(scope="module")
def acceptance_report():
    return acceptance_suite(seeds=20)


@pytest.mark.slow
@pytest.mark.parametrize("check", [
    "median_honest",
    "median_sticky_extreme",
    "median_median_pusher",
    "median_phase2_forced",
    "quantile_shift_windows_beta_0.0",
    "quantile_shift_windows_beta_0.00019",
    "quantile_composed",
    "mean_within_gamma",
    "mean_potential",
    "mean_sum_drift",
    "mean_inflated",
    "lower_bound_exceeds_gamma",
    "lower_bound_expectation",
])
def test_desk_scale_claims(acceptance_report, check):
    checks = {c.name: c for c in acceptance_report.checks}
    assert checks[check].passed, checks[check].to_dict()
