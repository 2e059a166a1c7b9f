import numpy as np
import pytest

from gatematch.data import Dataset, GateCurve
from gatematch.estimators import EstimatorConfig, estimate_match
from gatematch.exceptions import GateError, SubsampleError
from gatematch.inference import (
    SubsampleConfig,
    attach_interval,
    draw_subsample,
    interval_from_replicates,
    replicate_rng,
    subsample_ci,
    subsample_ci_many,
)
from gatematch.simulation import CASES, generate_case

GRID = (-0.2, 0.0, 0.2)


@pytest.fixture(scope="module")
def c1():
    return generate_case(CASES["C1"], 400, seed=3).dataset


def constant(ds, g):
    return np.full(len(g), 3.0)


@pytest.mark.parametrize("rescale", [False, True])
def test_constant_estimator_degenerate(c1, rescale):
    res = subsample_ci(c1, constant, GRID, SubsampleConfig(b_reps=6, seed=0, rescale=rescale))
    np.testing.assert_array_equal(res.lower, 3.0)
    np.testing.assert_array_equal(res.upper, 3.0)


def test_same_seed_same_interval(c1):
    sub = SubsampleConfig(b_reps=8, seed=11)
    one = subsample_ci(c1, EstimatorConfig("MATCH_BC"), GRID, sub)
    two = subsample_ci(c1, EstimatorConfig("MATCH_BC"), GRID, sub)
    np.testing.assert_array_equal(one.replicates, two.replicates)
    np.testing.assert_array_equal(one.lower, two.lower)
    np.testing.assert_array_equal(one.upper, two.upper)


def test_subsample_indices_repeat(c1):
    n0, n1 = SubsampleConfig().sizes(c1)
    a = draw_subsample(c1, n0, n1, replicate_rng(5, 2))
    b = draw_subsample(c1, n0, n1, replicate_rng(5, 2))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, draw_subsample(c1, n0, n1, replicate_rng(5, 3)))


def test_stratified_sizes(c1):
    n0, n1 = SubsampleConfig().sizes(c1)
    assert n0 == int(np.floor(c1.control.size ** (2 / 3) + 1e-9))
    for b in range(5):
        idx = draw_subsample(c1, n0, n1, replicate_rng(0, b))
        sub = c1.subset(idx)
        assert (sub.control.size, sub.treated.size) == (n0, n1)
        assert np.unique(idx).size == idx.size


def test_floor_of_exact_power():
    d = Dataset.from_arrays(np.zeros(2000), np.arange(2000) < 1000, np.zeros((2000, 1)),
                            np.zeros(2000))
    assert SubsampleConfig().sizes(d) == (100, 100)


def test_infeasible_size():
    rng = np.random.default_rng(0)
    d = Dataset.from_arrays(rng.normal(size=20), np.arange(20) % 2, rng.normal(size=(20, 1)),
                            rng.normal(size=20))
    with pytest.raises(SubsampleError):
        subsample_ci(d, EstimatorConfig("MATCH"), GRID, SubsampleConfig(r=0.5, seed=0))


def test_seed_required(c1):
    with pytest.raises(ValueError):
        subsample_ci(c1, EstimatorConfig("MATCH"), GRID, SubsampleConfig())


@pytest.mark.parametrize("kwargs", [{"r": 1.0}, {"r": 0.0}, {"b_reps": 1}, {"level": 1.0},
                                    {"b_reps": 2.5}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SubsampleConfig(**kwargs)


def test_level_monotone_and_ordered():
    rng = np.random.default_rng(1)
    reps = rng.normal(size=(50, 4))
    lo95, hi95 = interval_from_replicates(reps, 0.95)
    lo99, hi99 = interval_from_replicates(reps, 0.99)
    assert np.all(lo95 <= hi95)
    assert np.all(lo99 <= lo95) and np.all(hi99 >= hi95)
    center = reps.mean(axis=0)
    scale = np.full(50, 0.5)
    rlo95, rhi95 = interval_from_replicates(reps, 0.95, center, scale)
    rlo99, rhi99 = interval_from_replicates(reps, 0.99, center, scale)
    assert np.all(rlo99 <= rlo95) and np.all(rhi99 >= rhi95) and np.all(rlo95 <= rhi95)


def test_raw_quantiles_type7():
    reps = np.arange(1.0, 11.0)[:, None]
    lo, hi = interval_from_replicates(reps, 0.9)
    # type 7: position (n - 1) p on the sorted sample
    assert lo[0] == pytest.approx(1.45) and hi[0] == pytest.approx(9.55)


def test_rescaled_basic_interval():
    reps = np.array([[1.0], [2.0], [3.0], [4.0], [5.0]])
    lo, hi = interval_from_replicates(reps, 0.5, np.array([3.0]), np.full(5, 0.5))
    # deviations scaled: -1, -0.5, 0, 0.5, 1; quartiles -0.5 and 0.5
    assert (lo[0], hi[0]) == (2.5, 3.5)


def test_missing_replicates_counted(c1):
    calls = []

    def flaky(ds, g):
        calls.append(1)
        out = np.full(len(g), 1.0)
        if len(calls) % 2:
            out[0] = np.nan
        return out

    res = subsample_ci(c1, flaky, GRID, SubsampleConfig(b_reps=6, seed=0, rescale=False))
    assert res.missing[0] == 3 and res.missing[1] == 0
    assert not res.unreliable.any()
    assert res.diagnostics["missing_replicate_values"] == 3


def test_unreliable_flag(c1):
    def mostly_missing(ds, g):
        return np.full(len(g), np.nan)

    res = subsample_ci(c1, mostly_missing, GRID, SubsampleConfig(b_reps=4, seed=0, rescale=False))
    assert res.unreliable.all()
    assert np.isnan(res.lower).all()


def test_failing_replicate_counted(c1):
    def failing(ds, g):
        raise GateError("boom")

    res = subsample_ci(c1, failing, GRID, SubsampleConfig(b_reps=3, seed=0, rescale=False))
    assert res.diagnostics["failed_replicates"] == 3


def test_many_matches_single(c1):
    sub = SubsampleConfig(b_reps=5, seed=2)
    cfgs = [EstimatorConfig("MATCH"), EstimatorConfig("OR")]
    many = subsample_ci_many(c1, cfgs, GRID, sub)
    one = subsample_ci(c1, cfgs[1], GRID, sub)
    np.testing.assert_array_equal(many["OR"].replicates, one.replicates)


def test_attach_interval(c1):
    curve = estimate_match(c1, GRID)
    res = subsample_ci(c1, EstimatorConfig("MATCH"), GRID, SubsampleConfig(b_reps=5, seed=0))
    out = attach_interval(curve, res)
    assert isinstance(out, GateCurve)
    assert np.all(out.ci_lower <= out.ci_upper)
    np.testing.assert_array_equal(out.estimates, curve.estimates)
    np.testing.assert_array_equal(res.estimate, curve.estimates)
    assert out.diagnostics["subsample_treated"] == res.diagnostics["subsample_treated"]
