import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance, random_spd
from sensorsched.errors import InvalidCovarianceError, InvalidParamsError
from sensorsched.scheduler import FisherState, rank_one_update
from sensorsched.state_space import (
    CovarianceState,
    StateSpaceModel,
    filtered_covariance,
    predict_covariance,
    simulate,
    symmetrize,
    validate_spd,
)


class TestPredictCovariance:
    def test_vanishing_dynamics_leaves_process_noise(self):
        out = predict_covariance(np.eye(2), np.zeros((2, 2)), 1.0)
        np.testing.assert_allclose(out, np.eye(2))

    def test_identity_dynamics_doubles(self):
        out = predict_covariance(np.eye(2), np.eye(2), 1.0)
        np.testing.assert_allclose(out, 2.0 * np.eye(2))

    def test_matches_independent_evaluation(self):
        P = np.diag([0.3, 0.7])
        H = 0.8 * np.eye(2)
        sigma = np.sqrt(0.2)
        out = predict_covariance(P, H, sigma)
        np.testing.assert_allclose(out, np.diag([0.392, 0.648]), rtol=1e-12)
        # independent element-wise formula
        expected = np.array(
            [
                [sum(H[i, a] * P[a, b] * H[j, b] for a in range(2) for b in range(2))
                 + (sigma**2 if i == j else 0.0) for j in range(2)]
                for i in range(2)
            ]
        )
        np.testing.assert_allclose(out, expected, rtol=1e-12)

    def test_rejects_non_spd(self):
        with pytest.raises(InvalidCovarianceError):
            predict_covariance(np.array([[1.0, 2.0], [2.0, 1.0]]), np.eye(2), 1.0)

    def test_rejects_nonpositive_sigma(self):
        with pytest.raises(InvalidParamsError):
            predict_covariance(np.eye(2), np.eye(2), 0.0)

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_minimum_eigenvalue_at_least_noise_floor(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(1, 7))
        P = random_spd(rng, m)
        H = rng.standard_normal((m, m))
        sigma = float(rng.uniform(0.1, 2.0))
        out = predict_covariance(P, H, sigma)
        assert np.linalg.eigvalsh(out)[0] >= sigma**2 - 1e-10


class TestFilteredCovariance:
    def test_empty_selection_is_identity_operation(self):
        P = random_spd(np.random.default_rng(3), 3)
        out = filtered_covariance(P, np.empty((0, 3)), 1.0)
        np.testing.assert_allclose(out, P, rtol=1e-12)

    def test_scalar_case(self):
        out = filtered_covariance(np.eye(1), np.array([[1.0]]), 1.0)
        np.testing.assert_allclose(out, [[0.5]])

    def test_matches_chained_rank_one_updates(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            P, A = random_instance(rng, 4, 3)
            direct = filtered_covariance(P, A, 1.0)
            state = FisherState.initial(P, 1.0)
            for j in range(3):
                state = rank_one_update(state, j, A[j])
            np.testing.assert_allclose(state.F_inv, direct, rtol=1e-8)

    def test_all_sensors_matches_gain_form_update(self):
        # independent path: Joseph-form Kalman update
        rng = np.random.default_rng(11)
        for _ in range(25):
            m, n = 4, 6
            P, A = random_instance(rng, m, n)
            sigma = float(rng.uniform(0.3, 2.0))
            info = filtered_covariance(P, A, sigma)
            S = A @ P @ A.T + sigma**2 * np.eye(n)
            K = P @ A.T @ np.linalg.inv(S)
            IKA = np.eye(m) - K @ A
            joseph = IKA @ P @ IKA.T + sigma**2 * (K @ K.T)
            np.testing.assert_allclose(info, joseph, rtol=1e-8)

    def test_information_monotonicity_on_nested_sets(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            m = int(rng.integers(1, 9))
            n = int(rng.integers(2, 9))
            P, A = random_instance(rng, m, n)
            sigma = float(rng.uniform(0.3, 2.0))
            perm = rng.permutation(n)
            prev = np.trace(filtered_covariance(P, np.empty((0, m)), sigma))
            for size in range(1, n + 1):
                cur = np.trace(filtered_covariance(P, A[perm[:size]], sigma))
                assert cur <= prev + 1e-10
                prev = cur


class TestSimulate:
    def _model(self, m=2, n=3, sigma=1.0, T=8, seed=0):
        rng = np.random.default_rng(seed)
        H = [rng.standard_normal((m, m)) for _ in range(T)]
        A = [rng.standard_normal((n, m)) for _ in range(T)]
        return StateSpaceModel(m=m, n=n, H_t=H, A_t=A, sigma=sigma, Sigma_x=np.eye(m))

    def test_noiseless_limit_follows_dynamics(self):
        model = self._model(sigma=1e-12)
        traj = simulate(model, 8, seed=5)
        for t in range(7):
            np.testing.assert_allclose(
                traj.states[t + 1], model.H_at(t) @ traj.states[t], atol=1e-6
            )

    def test_same_seed_bitwise_identical(self):
        model = self._model()
        a = simulate(model, 8, seed=42)
        b = simulate(model, 8, seed=42)
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.measurements, b.measurements)

    def test_initial_state_covariance(self):
        Sigma = np.array([[1.0, 0.3], [0.3, 0.5]])
        model = StateSpaceModel(
            m=2, n=1, H_t=np.eye(2), A_t=np.ones((1, 2)), sigma=1.0, Sigma_x=Sigma
        )
        draws = np.array([simulate(model, 1, seed=i).states[0] for i in range(100_000)])
        emp = draws.T @ draws / len(draws)
        rel = np.linalg.norm(emp - Sigma) / np.linalg.norm(Sigma)
        assert rel < 0.05

    def test_rejects_bad_horizon(self):
        with pytest.raises(InvalidParamsError):
            simulate(self._model(), 0, seed=1)


class TestModelValidation:
    def test_shape_checks(self):
        with pytest.raises(InvalidParamsError):
            StateSpaceModel(m=2, n=3, H_t=np.eye(3), A_t=np.ones((3, 2)), sigma=1.0,
                            Sigma_x=np.eye(2))
        with pytest.raises(InvalidParamsError):
            StateSpaceModel(m=2, n=3, H_t=np.eye(2), A_t=np.ones((2, 2)), sigma=1.0,
                            Sigma_x=np.eye(2))

    def test_sigma_positive(self):
        with pytest.raises(InvalidParamsError):
            StateSpaceModel(m=1, n=1, H_t=np.eye(1), A_t=np.ones((1, 1)), sigma=-1.0,
                            Sigma_x=np.eye(1))

    def test_sigma_x_must_be_spd(self):
        with pytest.raises(InvalidCovarianceError):
            StateSpaceModel(m=2, n=1, H_t=np.eye(2), A_t=np.ones((1, 2)), sigma=1.0,
                            Sigma_x=np.array([[1.0, 0.0], [0.0, -0.2]]))

    def test_rank_deficient_rows_are_allowed(self):
        # duplicated rows keep the Fisher matrix invertible via the prior
        A = np.ones((4, 2))
        out = filtered_covariance(np.eye(2), A, 1.0)
        assert np.linalg.eigvalsh(out)[0] > 0

    def test_covariance_state_validation(self):
        P = np.eye(2)
        state = CovarianceState(P_pred=2 * P, P_filt=P, t=0)
        assert state.t == 0
        with pytest.raises(InvalidCovarianceError):
            CovarianceState(P_pred=P, P_filt=2 * P, t=0)
        with pytest.raises(InvalidParamsError):
            CovarianceState(P_pred=2 * P, P_filt=P, t=-1)


def test_validate_spd_tolerates_tiny_negative_eigenvalue():
    M = np.diag([1.0, -1e-12])
    validate_spd(M)  # within tolerance
    with pytest.raises(InvalidCovarianceError):
        validate_spd(np.diag([1.0, -1e-6]))


def test_symmetrize_kills_drift():
    M = np.array([[1.0, 1e-13], [0.0, 1.0]])
    out = symmetrize(M)
    assert np.array_equal(out, out.T)
