import math

import numpy as np
import pytest

from conftest import random_instance, random_spd
from sensorsched import curvature as cv
from sensorsched.errors import InstanceTooLargeError, InvalidParamsError
from sensorsched.state_space import filtered_covariance


def gain_by_inversion(P, A, subset, i, sigma):
    """Oracle marginal gain: two direct inversions."""
    A_S = A[list(subset)] if subset else np.empty((0, P.shape[0]))
    A_Si = A[list(subset) + [i]]
    before = np.trace(filtered_covariance(P, A_S, sigma))
    after = np.trace(filtered_covariance(P, A_Si, sigma))
    return float(before - after)


class TestExactCurvature:
    def test_two_sensor_instance_single_triple(self):
        rng = np.random.default_rng(0)
        P, A = random_instance(rng, 3, 2)
        report = cv.exact_curvature(P, A, 1.0)
        # only l=1 exists: S = {}, T = {j}, i = the other sensor
        candidates = [
            gain_by_inversion(P, A, [j], i, 1.0) / gain_by_inversion(P, A, [], i, 1.0)
            for j, i in [(0, 1), (1, 0)]
        ]
        assert report.C_l.shape == (1,)
        assert report.C_max == pytest.approx(max(candidates), rel=1e-10)

    def test_orthogonal_rows_identity_prior_is_submodular(self):
        # constructed oracle instance: for orthogonal rows with P = I the
        # gains can only shrink as the set grows
        A = np.diag([1.3, 0.8, 2.1])
        report = cv.exact_curvature(np.eye(3), A, 1.0)
        assert report.C_max <= 1.0 + 1e-8
        assert report.c_effective == 1.0

    def test_exact_at_least_sampled(self):
        rng = np.random.default_rng(1)
        for seed in range(5):
            P, A = random_instance(rng, 4, 6)
            exact = cv.exact_curvature(P, A, 1.0)
            sampled = cv.sampled_curvature(P, A, 1.0, samples=10_000, seed=seed)
            assert sampled.C_max <= exact.C_max

    def test_cap_enforced(self):
        P, A = random_instance(np.random.default_rng(2), 3, 11)
        with pytest.raises(InstanceTooLargeError):
            cv.exact_curvature(P, A, 1.0)

    def test_c_l_positive_and_max_consistent(self):
        rng = np.random.default_rng(3)
        P, A = random_instance(rng, 4, 6)
        report = cv.exact_curvature(P, A, 1.0)
        assert np.all(report.C_l > 0)
        assert report.C_max == np.max(report.C_l)
        assert report.skipped == 0

    def test_never_clamps_above_one(self):
        # weak submodularity: C_max > 1 happens and must be reported as-is
        rng = np.random.default_rng(4)
        seen_above_one = False
        for _ in range(10):
            P, A = random_instance(rng, 4, 6)
            report = cv.exact_curvature(P, A, 1.0)
            seen_above_one = seen_above_one or report.C_max > 1.0
            assert report.c_effective == max(1.0, report.C_max)
        assert seen_above_one


class TestSampledCurvature:
    def test_exhaustive_sampling_matches_exact(self):
        rng = np.random.default_rng(5)
        P, A = random_instance(rng, 3, 3)
        exact = cv.exact_curvature(P, A, 1.0)
        sampled = cv.sampled_curvature(P, A, 1.0, samples=3000, seed=7)
        assert sampled.C_max == pytest.approx(exact.C_max, rel=0)

    def test_nested_draws_are_monotone(self):
        rng = np.random.default_rng(6)
        P, A = random_instance(rng, 4, 7)
        small = cv.sampled_curvature(P, A, 1.0, samples=200, seed=3)
        large = cv.sampled_curvature(P, A, 1.0, samples=400, seed=3)
        assert large.C_max >= small.C_max

    def test_large_instance_smoke(self):
        rng = np.random.default_rng(7)
        P, A = random_instance(rng, 6, 12)
        report = cv.sampled_curvature(P, A, 1.0, samples=1500, seed=1)
        assert math.isfinite(report.C_max) and report.C_max > 0
        assert report.mode == "sampled" and report.samples == 1500


class TestInformationFloor:
    def test_no_measurement_energy(self):
        assert cv.information_floor(1.0, 1.0, 0.0, 5, 1e-15) == pytest.approx(1.0)

    def test_half(self):
        # n sigma_h^2 + q = 1 with lambda_min = sigma = 1
        assert cv.information_floor(1.0, 1.0, math.sqrt(0.5 / 5), 5, 0.5) == pytest.approx(0.5)

    def test_paper_scale_example(self):
        # lambda_min=0.5, sigma^2=0.2, sigma_h^2=0.02, n=50, q=0.3
        phi = cv.information_floor(0.5, math.sqrt(0.2), math.sqrt(0.02), 50, 0.3)
        assert phi == pytest.approx(1.0 / 8.5, rel=1e-12)


def _params(**kw):
    base = dict(
        sigma_h=0.5, C=1.0, q=3.0, n=8, m=4, lambda_max_P=1.0, lambda_min_P=1.0, sigma=1.0
    )
    base.update(kw)
    return cv.RandomRowParams(**base)


class TestRandomRowBound:
    def test_degenerate_case_is_one(self):
        p = _params(sigma_h=0.0, q=1e-15, C=1.0, lambda_max_P=2.0, lambda_min_P=2.0)
        assert cv.random_row_curvature_bound(p) == pytest.approx(1.0, rel=1e-9)

    def test_arithmetic_example(self):
        # phi = 1/(1/1 + 1/1) = 0.5; bound = 4*(1+2)/(0.25*(1+0.5)) = 32
        p = _params(
            sigma_h=math.sqrt(0.09), C=1.0, q=0.1, n=10, m=1,
            lambda_max_P=2.0, lambda_min_P=1.0, sigma=1.0,
        )
        assert cv.random_row_curvature_bound(p) == pytest.approx(32.0, rel=1e-12)

    def test_monotone_in_lambda_max_and_floor(self):
        lams = np.linspace(1.0, 4.0, 7)
        bounds = [
            cv.random_row_curvature_bound(_params(lambda_max_P=l)) for l in lams
        ]
        assert all(b2 > b1 for b1, b2 in zip(bounds, bounds[1:]))
        # larger q -> smaller floor -> larger bound
        qs = np.linspace(0.5, 5.0, 7)
        bounds_q = [cv.random_row_curvature_bound(_params(q=q)) for q in qs]
        assert all(b2 > b1 for b1, b2 in zip(bounds_q, bounds_q[1:]))

    def test_params_validation(self):
        with pytest.raises(InvalidParamsError):
            _params(C=0.5, sigma_h=1.0, m=4)  # C < m sigma_h^2
        with pytest.raises(InvalidParamsError):
            _params(q=-1.0)
        with pytest.raises(InvalidParamsError):
            _params(lambda_min_P=0.0)


class TestSpectralEventProbability:
    def test_limits(self):
        assert cv.spectral_event_probability(_params(q=1e6)) == pytest.approx(1.0)
        assert cv.spectral_event_probability(_params(q=1e-9)) == 0.0

    def test_arithmetic_example(self):
        # m=4, C=1, sigma_h^2=0.25, n=8, q=3 -> 1 - 4 exp(-2)
        p = cv.spectral_event_probability(_params())
        assert p == pytest.approx(1.0 - 4.0 * math.exp(-2.0), rel=1e-12)

    def test_monotone_in_q(self):
        qs = np.linspace(0.5, 10.0, 12)
        ps = [cv.spectral_event_probability(_params(q=q)) for q in qs]
        assert all(b >= a for a, b in zip(ps, ps[1:]))
        assert all(0.0 <= p <= 1.0 for p in ps)

    def test_rejects_degenerate_variance_factor(self):
        with pytest.raises(InvalidParamsError):
            cv.spectral_event_probability(_params(sigma_h=1.0, C=1.0, m=1))


class TestSphereRows:
    def test_norms_and_covariance(self):
        rng = np.random.default_rng(8)
        sigma_h = 0.5
        A = cv.sphere_rows(50_000, 4, sigma_h, rng)
        np.testing.assert_allclose(
            np.sum(A**2, axis=1), 4 * sigma_h**2, rtol=1e-12
        )
        emp = A.T @ A / len(A)
        np.testing.assert_allclose(emp, sigma_h**2 * np.eye(4), atol=0.01)


class TestEmpiricalCheck:
    def test_huge_q_event_always_holds(self):
        report = cv.empirical_curvature_check(
            m=3, n=5, sigma_h=0.5, C=0.75, q=100.0, sigma=1.0,
            P_pred=np.eye(3), trials=30, seed=0,
        )
        assert report.event_frequency == 1.0
        assert report.conditional_violations == 0
        assert report.event_count == 30

    def test_sampler_norm_constraint_checked(self):
        with pytest.raises(InvalidParamsError):
            cv.empirical_curvature_check(
                m=4, n=5, sigma_h=1.0, C=1.0, q=1.0, sigma=1.0,
                P_pred=np.eye(4), trials=5, seed=0,
            )

    def test_reported_quantities_consistent(self):
        report = cv.empirical_curvature_check(
            m=4, n=8, sigma_h=0.5, C=1.0, q=3.0, sigma=1.0,
            P_pred=np.eye(4), trials=60, seed=11,
        )
        assert 0.0 <= report.probability_lower_bound <= 1.0
        assert report.event_count <= report.trials
        assert report.event_frequency == report.event_count / report.trials
        if report.event_count:
            assert report.max_curvature <= report.curvature_bound
