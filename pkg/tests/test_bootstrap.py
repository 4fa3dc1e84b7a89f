import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _suites import procrustes_equals_gap_suite, signal_plus_noise_suite
from simbench.bench import prepare_suite
from simbench.bootstrap import BootstrapReport, bootstrap_compare, draw, percentile_interval
from simbench.errors import InputError


def dumps(reports):
    return json.dumps([r.to_dict() for r in reports], sort_keys=True)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200))
def test_interval_is_ordered_sample_values(xs):
    lo, hi = percentile_interval(xs)
    assert lo <= hi and lo in xs and hi in xs


def test_interval_nearest_rank():
    xs = list(range(1, 2001))
    assert percentile_interval(xs) == (50, 1950)
    assert percentile_interval([7.0]) == (7.0, 7.0)


def test_draw_depends_only_on_seed_and_index():
    assert np.array_equal(draw(30, 5, 17), draw(30, 5, 17))
    assert not np.array_equal(draw(30, 5, 17), draw(30, 5, 18))
    assert not np.array_equal(draw(30, 5, 17), draw(30, 6, 17))


def test_noise_metric_is_separated():
    prepared = prepare_suite(signal_plus_noise_suite(size=40))
    reports = bootstrap_compare(prepared, resamples=300, seed=3)
    assert {r.statistic for r in reports} == {"rho", "tau"}
    for r in reports:
        assert r.pair == ("procrustes", "mean_cca")
        assert r.significant and r.ci_low > 0


def test_rerun_and_thread_count_give_identical_output():
    prepared = prepare_suite(signal_plus_noise_suite(size=25))
    one = dumps(bootstrap_compare(prepared, resamples=200, seed=11, workers=1))
    assert dumps(bootstrap_compare(prepared, resamples=200, seed=11, workers=1)) == one
    assert dumps(bootstrap_compare(prepared, resamples=200, seed=11, workers=4)) == one
    assert dumps(bootstrap_compare(prepared, resamples=200, seed=12, workers=1)) != one


def test_same_metric_twice_has_zero_interval():
    prepared = prepare_suite(procrustes_equals_gap_suite(size=12))
    for r in bootstrap_compare(prepared, metrics=["procrustes", "procrustes"], resamples=100, seed=0):
        assert r.ci_low == r.ci_high == 0.0 and not r.significant


def test_degenerate_resamples_are_counted():
    prepared = prepare_suite(procrustes_equals_gap_suite(size=4))
    (r, *_) = bootstrap_compare(prepared, metrics=["procrustes", "linear_cka"], resamples=400, seed=0)
    # with 4 members some draws repeat one entry 4 times: constant gaps
    assert r.skipped > 0
    assert len(r.diffs) == r.resamples - r.skipped


def test_report_round_trip():
    prepared = prepare_suite(procrustes_equals_gap_suite(size=8))
    for r in bootstrap_compare(prepared, metrics=["procrustes", "linear_cka"], resamples=50, seed=2):
        assert BootstrapReport.from_dict(json.loads(json.dumps(r.to_dict()))) == r


@pytest.mark.parametrize(
    "kwargs",
    [{"metrics": ["procrustes"]}, {"resamples": 0}],
)
def test_bad_arguments(kwargs):
    with pytest.raises(InputError):
        bootstrap_compare(procrustes_equals_gap_suite(size=5), **kwargs)


def test_tiny_suite_rejected():
    with pytest.raises(InputError):
        bootstrap_compare(procrustes_equals_gap_suite(size=2))
