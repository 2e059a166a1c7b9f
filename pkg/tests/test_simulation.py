import math

import numpy as np
import pandas as pd
import pytest

import frozen
from gatematch.data import EvaluationGrid
from gatematch.estimators import EstimatorConfig
from gatematch.inference import SubsampleConfig
from gatematch.nuisance import DesignSpec
from gatematch.simulation import (
    CASES,
    TIDY_COLUMNS,
    CaseSpec,
    SimulationReport,
    compare_metrics,
    frame_to_csv,
    generate_case,
    propensity_true,
    run_monte_carlo,
    true_gate,
)

GRID = EvaluationGrid((-0.4, -0.2, 0.0, 0.2, 0.4))


class TestTruth:
    def test_mechanism_a_origin(self):
        assert propensity_true("A", [0.0, 0.0, 0.0])[0] == 0.5

    @pytest.mark.parametrize("study,z,value", [("I", 0.4, 0.32), ("II", 0.0, 0.0),
                                               ("III", 0.0, math.log(2.0)),
                                               ("II", 0.5, 0.5 * 4 * 0.25)])
    def test_true_gate(self, study, z, value):
        assert true_gate(study, z) == pytest.approx(value, abs=1e-15)

    def test_true_gate_vectorised(self):
        np.testing.assert_allclose(true_gate("I", [0.0, 0.1]), [0.0, 0.02], atol=1e-15)

    def test_unknown_study(self):
        with pytest.raises(ValueError):
            true_gate("IV", 0.0)


class TestCases:
    def test_case_table(self):
        assert [CASES[f"C{i}"].mechanism for i in range(1, 13)] == list("AAABBBCCCBBB")
        assert [CASES[f"C{i}"].study for i in range(1, 13)] == ["I", "II", "III"] * 4
        assert CASES["C10"].fit_propensity_spec == DesignSpec.squares(3)
        assert CASES["C4"].fit_propensity_spec == DesignSpec.main_effects(3)

    def test_bad_case(self):
        with pytest.raises(ValueError):
            CaseSpec("C99", "D", "I")

    def test_drop_x2(self):
        spec = CASES["C1"].without_x2()
        assert spec.label == "C1-noX2"
        g = generate_case(spec, 50, 0)
        assert g.dataset.x_names == ("x1", "x3")
        assert spec.propensity_spec().terms == ((0,), (1,))
        assert CASES["C10"].without_x2().propensity_spec().terms == ((0, 0), (1, 1))
        full = generate_case(CASES["C1"], 50, 0)
        np.testing.assert_array_equal(g.dataset.y, full.dataset.y)


class TestGenerate:
    def test_z_is_x1_and_outcome_consistent(self):
        g = generate_case(CASES["C2"], 300, 4)
        d = g.dataset
        np.testing.assert_array_equal(d.z, d.x[:, 0])
        np.testing.assert_array_equal(d.y, np.where(d.a == 1, g.y1, g.y0))
        assert d.x[:, 0].min() >= -0.5 and d.x[:, 0].max() <= 0.5

    def test_x2_proportions(self):
        x2 = generate_case(CASES["C1"], 2000, 5).dataset.x[:, 1]
        for v in (0, 1, 2):
            assert abs(np.mean(x2 == v) - 1 / 3) <= 0.03

    def test_mechanism_a_treated_fraction(self):
        lo, hi = frozen.MECH_A_TREATED_BAND
        for seed in range(5):
            frac = generate_case(CASES["C1"], 2000, seed).dataset.a.mean()
            assert lo <= frac <= hi
            assert 0.50 <= frac <= 0.70

    def test_mechanism_b_extremes(self):
        for seed in range(3):
            pi = generate_case(CASES["C4"], 2000, seed).pi_true
            assert pi.min() < 1e-5
            assert 0.01 <= np.mean(pi < 5e-3) <= 0.04

    def test_mechanism_a_not_extreme(self):
        pi = generate_case(CASES["C1"], 2000, 0).pi_true
        assert pi.min() > 0.05 and pi.max() < 0.8

    def test_studies_share_y0(self):
        g = [generate_case(CASES[c], 200, 9) for c in ("C1", "C2", "C3")]
        for other in g[1:]:
            np.testing.assert_array_equal(other.y0, g[0].y0)
            np.testing.assert_array_equal(other.dataset.a, g[0].dataset.a)
        eff = g[1].y1 - g[0].y1
        x1 = g[0].dataset.z
        np.testing.assert_allclose(eff, true_gate("II", x1) - true_gate("I", x1), atol=1e-12)

    def test_seeded(self):
        a = generate_case(CASES["C7"], 100, 3)
        b = generate_case(CASES["C7"], 100, 3)
        np.testing.assert_array_equal(a.dataset.y, b.dataset.y)
        assert not np.array_equal(a.dataset.y, generate_case(CASES["C7"], 100, 4).dataset.y)

    def test_small_n(self):
        with pytest.raises(ValueError):
            generate_case(CASES["C1"], 1, 0)


def stub_report(estimates, truth, tags=("MATCH",), lo=None, hi=None):
    est = np.asarray(estimates, dtype=float)
    return SimulationReport("C1", 100, est.shape[0], 0, EvaluationGrid((0.0, 0.5)), tags,
                            np.asarray(truth, dtype=float), est, lo, hi)


class TestMetrics:
    def test_exact_estimator(self):
        truth = [0.0, 0.5]
        rep = stub_report(np.tile(truth, (4, 1, 1)), truth)
        np.testing.assert_array_equal(rep.bias("MATCH"), 0.0)
        np.testing.assert_array_equal(rep.sd("MATCH"), 0.0)
        np.testing.assert_array_equal(rep.mse("MATCH"), 0.0)
        assert rep.mse_avg("MATCH") == 0.0

    def test_known_values(self):
        vals = np.array([1.0, 2.0, 3.0, 6.0])
        est = np.stack([vals, vals + 1], axis=1)[:, None, :]
        rep = stub_report(est, [2.0, 2.0])
        np.testing.assert_allclose(rep.bias("MATCH"), [1.0, 2.0])
        np.testing.assert_allclose(rep.sd("MATCH"), np.std(vals, ddof=1))
        np.testing.assert_allclose(rep.mse("MATCH"), [np.mean((vals - 2) ** 2),
                                                      np.mean((vals - 1) ** 2)])
        r = len(vals)
        np.testing.assert_allclose(rep.mse("MATCH"),
                                   rep.bias("MATCH") ** 2 + rep.sd("MATCH") ** 2 * (r - 1) / r)

    def test_missing_excluded_and_counted(self):
        est = np.array([[[1.0, np.nan]], [[3.0, 2.0]], [[5.0, 4.0]]])
        rep = stub_report(est, [0.0, 0.0])
        np.testing.assert_array_equal(rep.missing("MATCH"), [0, 1])
        np.testing.assert_allclose(rep.bias("MATCH"), [3.0, 3.0])

    def test_coverage(self):
        est = np.zeros((4, 1, 2))
        lo = np.array([[[-1, -1]], [[-1, 1]], [[0.5, -1]], [[-1, -1]]], dtype=float)
        hi = np.ones((4, 1, 2))
        rep = stub_report(est, [0.0, 0.0], lo=lo, hi=hi)
        np.testing.assert_allclose(rep.coverage("MATCH"), [0.75, 0.75])
        assert rep.cp95("MATCH") == 0.75

    def test_no_intervals(self):
        rep = stub_report(np.zeros((3, 1, 2)), [0.0, 0.0])
        assert np.isnan(rep.cp95("MATCH"))

    def test_frame_columns(self):
        frame = stub_report(np.zeros((3, 1, 2)), [0.0, 0.0]).frame()
        assert tuple(frame.columns) == TIDY_COLUMNS
        assert len(frame) == 2


class TestHarness:
    def test_small_run(self):
        rep = run_monte_carlo(CASES["C1"], 200, 3, ("MATCH", "OR"), GRID, master_seed=1)
        assert rep.estimates.shape == (3, 2, 5)
        assert rep.estimators == ("MATCH", "OR")
        np.testing.assert_allclose(rep.truth, true_gate("I", GRID.asarray()))
        assert not rep.failures.any()

    def test_worker_count_irrelevant(self):
        args = (CASES["C1"], 150, 4, ("MATCH", "MATCH_BC"), GRID)
        one = run_monte_carlo(*args, master_seed=2, workers=1)
        two = run_monte_carlo(*args, master_seed=2, workers=2)
        np.testing.assert_array_equal(one.estimates, two.estimates)
        assert frame_to_csv(one.frame()) == frame_to_csv(two.frame())

    def test_seed_changes_output(self):
        args = (CASES["C1"], 150, 2, ("MATCH",), GRID)
        a = run_monte_carlo(*args, master_seed=0)
        b = run_monte_carlo(*args, master_seed=1)
        assert not np.array_equal(a.estimates, b.estimates)

    def test_with_ci(self):
        rep = run_monte_carlo(CASES["C1"], 300, 2, ("MATCH",), GRID, master_seed=3,
                              with_ci=True, sub=SubsampleConfig(b_reps=5))
        assert rep.ci_lower.shape == rep.estimates.shape
        assert np.all(rep.ci_lower <= rep.ci_upper)
        assert 0.0 <= rep.cp95("MATCH") <= 1.0

    def test_failures_recorded(self):
        # six matches cannot be found in tiny samples; OR still runs
        rep = run_monte_carlo(CASES["C1"], 9, 2,
                              (EstimatorConfig("MATCH", match=_m(6)), "OR"), GRID, master_seed=0)
        assert rep.failures[:, 0].all() and not rep.failures[:, 1].any()
        assert np.isnan(rep.estimates[:, 0]).all()

    def test_reps_minimum(self):
        with pytest.raises(ValueError):
            run_monte_carlo(CASES["C1"], 100, 1)

    def test_duplicate_estimator(self):
        with pytest.raises(ValueError):
            run_monte_carlo(CASES["C1"], 100, 2, ("MATCH", "match"))

    def test_case_working_models_applied(self):
        rep = run_monte_carlo(CASES["C10"].without_x2(), 200, 2, ("IPW",), GRID)
        assert rep.case_id == "C10-noX2"


def _m(m):
    from gatematch.matching import MatchConfig
    return MatchConfig(m=m)


class TestCompare:
    def frame(self, case, mses):
        rows = []
        for tag, m in mses.items():
            for z in (0.0, 0.5):
                rows.append({"case": case, "estimator": tag, "z": z, "bias": 0.0, "sd": 0.0,
                             "mse": m, "cp95": np.nan, "n": 10, "reps": 2, "seed": 0,
                             "missing": 0})
        return pd.DataFrame(rows)

    def test_single_estimator(self):
        out = compare_metrics([self.frame("C1", {"MATCH": 0.1})])
        assert len(out["ranking"]) == 1

    def test_ranking_order(self):
        out = compare_metrics([self.frame("C1", {"IPW": 0.2, "MATCH": 0.1})])
        assert list(out["ranking"]["estimator"]) == ["MATCH", "IPW"]
        assert list(out["ranking"]["rank"]) == [1, 2]

    def test_layouts(self):
        out = compare_metrics([self.frame("C1", {"MATCH": 0.1, "OR": 0.3}),
                               self.frame("C4", {"MATCH": 0.2, "OR": 0.1})])
        assert list(out["bias_sd"].columns) == ["case", "z", "MATCH_bias", "MATCH_sd",
                                                "OR_bias", "OR_sd"]
        mse = out["mse"]
        assert list(mse.columns) == ["case", "z", "MATCH", "OR"]
        avg = mse[(mse["case"] == "C4") & (mse["z"] == "avg")]
        assert float(avg["OR"].iloc[0]) == pytest.approx(0.1)
        assert list(out["ranking"]["estimator"]) == ["MATCH", "OR", "OR", "MATCH"]

    def test_accepts_reports(self):
        rep = run_monte_carlo(CASES["C1"], 150, 2, ("MATCH", "OR"), GRID)
        out = compare_metrics([rep])
        assert len(out["tidy"]) == 10

    def test_empty(self):
        with pytest.raises(ValueError):
            compare_metrics([])

    def test_missing_columns(self):
        with pytest.raises(ValueError):
            compare_metrics([pd.DataFrame({"case": ["C1"]})])


@pytest.mark.slow
def test_match_bias_shrinks_with_n():
    reps = 300
    prev = None
    for n in (500, 1000, 2000):
        rep = run_monte_carlo(CASES["C1"], n, reps, ("MATCH",), GRID, master_seed=21)
        bias = np.abs(rep.bias("MATCH"))
        se = rep.sd("MATCH") / np.sqrt(reps)
        if prev is not None:
            prev_bias, prev_se = prev
            assert np.all(bias <= prev_bias + 2 * np.hypot(se, prev_se))
        prev = (bias, se)
