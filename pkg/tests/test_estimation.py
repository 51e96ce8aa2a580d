import math

import numpy as np
import pytest

from ldpmean import (
    RRSC,
    Calibrator,
    RandomStream,
    cohort_mean,
    estimate_mean,
    generate_cohort,
    l2_error,
)

from conftest import random_unit


@pytest.fixture(scope="module")
def calibrator():
    return Calibrator(RandomStream(31).derive("calib"), trials=50_000)


class TestGenerateCohort:
    def test_unit_norm_rows(self, root):
        vecs = generate_cohort(40, 17, root.derive("c"))
        assert vecs.shape == (40, 17)
        assert np.abs(np.linalg.norm(vecs, axis=1) - 1.0).max() < 1e-12

    def test_odd_n_rejected(self, root):
        with pytest.raises(ValueError):
            generate_cohort(41, 17, root)
        with pytest.raises(ValueError):
            generate_cohort(0, 17, root)

    def test_deterministic(self, root):
        a = generate_cohort(20, 9, root.derive("rep"))
        b = generate_cohort(20, 9, root.derive("rep"))
        assert np.array_equal(a, b)

    def test_second_half_concentrates(self, root):
        # normalized N(10,1)^{x d}: mean coordinate ~ 10/sqrt(101 d) = 0.0445
        d = 500
        vecs = generate_cohort(100, d, root.derive("conc"))
        mean_coord = vecs[50:].mean()
        target = 10.0 / math.sqrt(d * 101.0)
        assert abs(mean_coord - target) <= 0.1 * target

    def test_halves_differ(self, root):
        vecs = generate_cohort(40, 50, root.derive("halves"))
        # first half is much more diffuse than the second
        assert vecs[:20].mean() < vecs[20:].mean()


class TestEstimateMean:
    def test_single_user_smoke(self, root, calibrator):
        # degenerate n=1 path: the estimate is one codeword scaled by r_k
        mech = RRSC(50.0, 1, k=1, calibrator=calibrator).configure(10)
        vecs = generate_cohort(2, 10, root.derive("solo"))[:1]
        est = estimate_mean(vecs, mech, root.derive("run"))
        assert est.shape == (10,)
        assert np.isfinite(est).all()
        assert abs(np.linalg.norm(est) - mech.r_k_) < 1e-9

    def test_deterministic(self, root, calibrator):
        mech = RRSC(3.0, 3, calibrator=calibrator).configure(12)
        vecs = generate_cohort(10, 12, root.derive("cd"))
        a = estimate_mean(vecs, mech, root.derive("runit"))
        b = estimate_mean(vecs, mech, root.derive("runit"))
        assert np.array_equal(a, b)

    def test_dimension_mismatch(self, root, calibrator):
        mech = RRSC(3.0, 3, calibrator=calibrator).configure(12)
        with pytest.raises(ValueError):
            estimate_mean(np.eye(11), mech, root)

    def test_aggregate_unbiased_over_repeats(self, root, calibrator):
        # repeated protocol runs on a fixed small cohort average to its mean
        mech = RRSC(3.0, 3, calibrator=calibrator).configure(16)
        vecs = generate_cohort(20, 16, root.derive("pop"))
        runs = 300
        acc = np.zeros(16)
        for r in range(runs):
            acc += estimate_mean(vecs, mech, root.derive("rep", r))
        err = np.linalg.norm(acc / runs - cohort_mean(vecs))
        # per-run estimator std is sqrt((r_k^2-1)/n) per coordinate-norm
        per_run = math.sqrt((mech.r_k_**2 - 1.0) / 20)
        assert err <= 5.0 * per_run / math.sqrt(runs)


class TestL2Error:
    def test_exact_zero_and_shift(self, root):
        vecs = generate_cohort(6, 5, root.derive("l2"))
        mean = cohort_mean(vecs)
        assert l2_error(mean, vecs) == 0.0
        shifted = mean + np.array([0.25, 0, 0, 0, 0])
        assert abs(l2_error(shifted, vecs) - 0.25) < 1e-12

    def test_dimension_mismatch(self, root):
        vecs = generate_cohort(6, 5, root.derive("l2b"))
        with pytest.raises(ValueError):
            l2_error(np.zeros(4), vecs)


class TestErrorScaling:
    def test_error_matches_variance_prediction(self, root, calibrator):
        # l2 error ~ sqrt((r_k^2 - 1)/n) for RRSC at n=1000, d=100, eps=b=6
        mech = RRSC(6.0, 6, calibrator=calibrator).configure(100)
        rounds = 10
        errors = np.empty(rounds)
        for r in range(rounds):
            vecs = generate_cohort(1000, 100, root.derive("cohort", r))
            est = estimate_mean(vecs, mech, root.derive("proto", r))
            errors[r] = l2_error(est, vecs)
        predicted = math.sqrt((mech.r_k_**2 - 1.0) / 1000)
        stderr = errors.std(ddof=1) / math.sqrt(rounds)
        assert abs(errors.mean() - predicted) <= 3.0 * stderr

    def test_one_over_sqrt_n_scaling(self, root, calibrator):
        # regression slope of log error vs log n in [-0.6, -0.4]
        mech = RRSC(3.0, 3, calibrator=calibrator).configure(50)
        ns = (250, 1000, 4000)
        rounds = 6
        mean_errors = []
        for n in ns:
            errs = []
            for r in range(rounds):
                vecs = generate_cohort(n, 50, root.derive(f"sc-{n}", r))
                est = estimate_mean(vecs, mech, root.derive(f"sp-{n}", r))
                errs.append(l2_error(est, vecs))
            mean_errors.append(np.mean(errs))
        slope = np.polyfit(np.log(ns), np.log(mean_errors), 1)[0]
        assert -0.6 <= slope <= -0.4
