import numpy as np
import pytest

from modens import (CostKind, EvalConfig, OutcomeInterval, cost_abs_std, cost_mass,
                    cost_relative, coverage, empirical_cdf, gamma_star_search)


def iv(lo, hi, alpha=0.1, gamma=1.0):
    return OutcomeInterval(lo=lo, hi=hi, alpha=alpha, gamma=gamma)


class TestCoverage:
    def test_all_inside(self):
        ivs = [iv(0, 2)] * 5
        assert coverage(ivs, [1.0] * 5) == 1.0

    def test_none_inside(self):
        ivs = [iv(0, 2)] * 5
        assert coverage(ivs, [3.0] * 5) == 0.0

    def test_half_inside(self):
        ivs = [iv(0, 1)] * 6
        assert coverage(ivs, [0.5, 0.5, 0.5, 2, 2, 2]) == 0.5

    def test_closed_interval_endpoints_count(self):
        assert coverage([iv(0, 1)], [1.0]) == 1.0
        assert coverage([iv(0, 1)], [0.0]) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            coverage([iv(0, 1)], [0.5, 0.6])


class TestCostAbsStd:
    def test_unit_intervals(self):
        assert cost_abs_std([iv(0, 1)] * 4, 1.0) == pytest.approx(1.0)

    def test_degenerate_intervals(self):
        assert cost_abs_std([iv(0, 0)] * 3, 2.0) == 0.0

    def test_arithmetic(self):
        assert cost_abs_std([iv(0, 2), iv(0, 4)], 2.0) == pytest.approx(1.5)

    def test_zero_std_rejected(self):
        with pytest.raises(ValueError):
            cost_abs_std([iv(0, 1)], 0.0)

    def test_scales_linearly_under_outcome_rescaling(self, rng):
        ivs = [iv(float(a), float(a + b)) for a, b in
               zip(rng.normal(0, 1, 10), rng.uniform(0.5, 2, 10))]
        std = 1.7
        c1 = cost_abs_std(ivs, std)
        scaled = [iv(3 * x.lo, 3 * x.hi) for x in ivs]
        assert cost_abs_std(scaled, std) == pytest.approx(3 * c1)
        assert cost_abs_std(scaled, 3 * std) == pytest.approx(c1)


class TestCostRelative:
    def test_two_methods(self):
        out = cost_relative({"a": 2.0, "b": 4.0})
        assert out == {"a": 1.0, "b": 2.0}

    def test_single_method(self):
        assert cost_relative({"x": 7.0}) == {"x": 1.0}

    def test_equal_lengths(self):
        out = cost_relative({"a": 3.0, "b": 3.0, "c": 3.0})
        assert all(v == 1.0 for v in out.values())

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            cost_relative({"a": 0.0})
        with pytest.raises(ValueError):
            cost_relative({})


class TestCostMass:
    def test_interval_spanning_all_outcomes(self, rng):
        ys = rng.normal(0, 1, 50)
        assert cost_mass([iv(ys.min() - 1, ys.max() + 1)], ys) == pytest.approx(1.0)

    def test_degenerate_interval_at_non_atom(self, rng):
        ys = rng.normal(0, 1, 50)
        assert cost_mass([iv(10.0, 10.0)], ys) == 0.0

    def test_lower_half_of_evenly_spaced(self):
        ys = np.linspace(0.0, 99.0, 100)
        got = cost_mass([iv(-1.0, 49.5)], ys)
        assert got == pytest.approx(0.5, abs=0.01)

    def test_at_most_one(self, rng):
        ys = rng.normal(0, 3, 40)
        ivs = [iv(float(a), float(a + abs(b))) for a, b in
               zip(rng.normal(0, 3, 20), rng.normal(0, 5, 20))]
        assert cost_mass(ivs, ys) <= 1.0
        assert cost_mass(ivs, ys) >= 0.0

    def test_invariant_under_monotone_transform(self, rng):
        # applying the same strictly increasing map to outcomes and
        # interval endpoints leaves the mass unchanged (up to interpolation
        # error within cells, zero when knots map exactly)
        ys = np.sort(rng.normal(0, 1, 30))
        ivs = [iv(float(ys[3]), float(ys[20]))]
        before = cost_mass(ivs, ys)

        def f(v):
            return np.expm1(v)  # strictly increasing

        ivs2 = [iv(float(f(ys[3])), float(f(ys[20])))]
        assert cost_mass(ivs2, f(ys)) == pytest.approx(before, abs=1e-12)

    def test_empirical_cdf_flat_beyond_extremes(self, rng):
        ys = rng.normal(0, 1, 20)
        cdf = empirical_cdf(ys)
        assert cdf(ys.min() - 100) == 0.0
        assert cdf(ys.max() + 100) == 1.0


def step_pipeline(threshold, inner=(-1.0, 1.0), outer=(-10.0, 10.0), n=20):
    """Scripted pipeline whose coverage jumps when gamma >= threshold."""

    def pipeline(gamma):
        lo, hi = outer if gamma >= threshold else inner
        return [OutcomeInterval(lo=lo, hi=hi, alpha=0.1, gamma=gamma)] * n

    return pipeline


class TestGammaStarSearch:
    def config(self, target=0.9, **kw):
        return EvalConfig(target_coverage=target, alpha=0.1, **kw)

    def test_gamma_one_when_already_covered(self):
        outcomes = np.linspace(-0.5, 0.5, 20)  # inside even the narrow interval
        report = gamma_star_search(step_pipeline(5.0), outcomes, self.config())
        assert report.gamma_star == 1.0
        assert report.achieved_coverage == 1.0

    def test_failure_when_gamma_50_insufficient(self):
        outcomes = np.full(20, 100.0)  # never covered
        report = gamma_star_search(step_pipeline(5.0), outcomes, self.config())
        assert report.failed
        assert report.gamma_star is None
        assert report.coverage_cost is None
        assert report.achieved_coverage < 0.9

    def test_step_threshold_recovered(self):
        outcomes = np.linspace(4.0, 6.0, 20)  # only the wide interval covers
        report = gamma_star_search(step_pipeline(7.0), outcomes, self.config())
        assert 7.0 <= report.gamma_star <= 7.0 + 0.05

    def test_hundred_random_thresholds(self, rng):
        outcomes = np.linspace(4.0, 6.0, 10)
        for _ in range(100):
            thr = float(rng.uniform(1.01, 49.9))
            cfg = self.config(gamma_tol=0.05)
            report = gamma_star_search(step_pipeline(thr, n=10), outcomes, cfg)
            assert not report.failed
            assert thr <= report.gamma_star <= thr + cfg.gamma_tol
            assert report.achieved_coverage >= cfg.target_coverage

    def test_cost_kind_dispatch(self):
        outcomes = np.concatenate([np.zeros(10), np.full(10, 0.5)])
        cfg = EvalConfig(target_coverage=0.9, alpha=0.1, cost_kind=CostKind.MASS)
        report = gamma_star_search(step_pipeline(3.0), outcomes, cfg)
        assert report.coverage_cost == pytest.approx(1.0)  # outer spans all

    def test_report_json_failure_has_no_cost_key(self, tmp_path):
        outcomes = np.full(20, 100.0)
        report = gamma_star_search(step_pipeline(5.0), outcomes, self.config())
        path = tmp_path / "report.json"
        report.write_json(path)
        import json

        doc = json.loads(path.read_text())
        assert doc["gamma_star"] == "FAILURE"
        assert "coverage_cost" not in doc

    def test_coverage_monotone_probe_points(self, rng):
        # scripted nested intervals: coverage curve sampled on the grid is
        # nondecreasing
        ys = rng.normal(0, 5, 200)

        def pipeline(gamma):
            half = gamma
            return [OutcomeInterval(lo=-half, hi=half, alpha=0.1, gamma=gamma)] * 200

        covs = [coverage(pipeline(g), ys) for g in (1, 2, 5, 10, 25, 50)]
        assert all(a <= b + 1e-12 for a, b in zip(covs, covs[1:]))


class TestRunExperiment:
    def test_train_in_place_and_write_artifacts(self, tmp_path):
        from modens import GeneratorConfig, Head, TrainConfig, generate_dataset, run_experiment

        gen = GeneratorConfig(seed=17, n_train=200, n_valid=40, n_test=80,
                              noise_family="gaussian", noise_scale=4.0)
        train, _, test = generate_dataset(None, gen)
        cfg = EvalConfig(target_coverage=0.8, alpha=0.2, cost_kind=CostKind.MASS)
        report_path = tmp_path / "report.json"
        points_path = tmp_path / "points.csv"
        report = run_experiment(
            test, cfg, train_data=train,
            train_config=TrainConfig(hidden=(6,), epochs=60, head=Head.GAUSSIAN),
            members=2, seed=3, report_json=report_path, points_csv=points_path)
        assert len(report.intervals) == test.n
        assert report_path.exists()
        lines = points_path.read_text().splitlines()
        assert lines[0] == "index,lo,hi,y,covered"
        assert len(lines) == test.n + 1
        covered = sum(int(line.split(",")[4]) for line in lines[1:])
        assert covered / test.n == pytest.approx(report.achieved_coverage)

    def test_requires_potential_outcomes(self, tmp_path):
        from modens import Dataset, run_experiment

        rng = np.random.default_rng(0)
        bare = Dataset(covariates=rng.normal(0, 1, (10, 2)),
                       treatments=rng.integers(0, 2, 10),
                       outcomes=rng.normal(0, 1, 10))
        with pytest.raises(ValueError, match="y0/y1"):
            run_experiment(bare, EvalConfig(target_coverage=0.9, alpha=0.1))


class TestEvalConfigValidation:
    def test_bad_target(self):
        with pytest.raises(ValueError):
            EvalConfig(target_coverage=0.0, alpha=0.1)

    def test_gamma_range_must_start_at_one(self):
        with pytest.raises(ValueError):
            EvalConfig(target_coverage=0.9, alpha=0.1, gamma_range=(2.0, 50.0))

    def test_bad_arm(self):
        with pytest.raises(ValueError):
            EvalConfig(target_coverage=0.9, alpha=0.1, arm=2)
