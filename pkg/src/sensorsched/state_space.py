"""Linear time-varying state-space model and Kalman covariance recursions.

State and measurement model:

    x(t+1) = H(t) x(t) + w(t),      w(t) ~ N(0, sigma^2 I_m)
    y(t)   = A(t) x(t) + v(t),      v(t) ~ N(0, sigma^2 I_n)

with x(0) ~ N(0, Sigma_x). A single noise scale sigma drives both process
and measurement noise. Covariance-producing operations symmetrize their
output to kill round-off drift over long horizons.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

from .errors import InvalidCovarianceError, InvalidParamsError

# Relative tolerance for symmetry / positive-definiteness checks.
SPD_TOL = 1e-10

MatrixSpec = Union[np.ndarray, Sequence[np.ndarray]]


def symmetrize(M: np.ndarray) -> np.ndarray:
    """Return (M + M^T)/2."""
    return 0.5 * (M + M.T)


def validate_spd(M: np.ndarray, name: str = "covariance", tol: float = SPD_TOL) -> np.ndarray:
    """Check that M is symmetric positive definite within tolerance.

    Accepts min eigenvalue down to -tol * max(1, lambda_max); anything below
    raises ``InvalidCovarianceError``. Returns M as a float array.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidCovarianceError(f"{name} must be square, got shape {M.shape}")
    scale = max(1.0, float(np.abs(M).max(initial=0.0)))
    if float(np.abs(M - M.T).max(initial=0.0)) > tol * scale:
        raise InvalidCovarianceError(f"{name} is not symmetric within {tol:g} relative")
    # fast path: a successful Cholesky certifies strict positive definiteness
    try:
        np.linalg.cholesky(symmetrize(M))
        return M
    except np.linalg.LinAlgError:
        pass
    # borderline: fall back to the eigenvalue tolerance rule
    eigs = np.linalg.eigvalsh(symmetrize(M))
    if eigs[0] <= -tol * max(1.0, eigs[-1]):
        raise InvalidCovarianceError(
            f"{name} is not positive definite (min eigenvalue {eigs[0]:.3e})"
        )
    return M


def _as_matrix_steps(spec: MatrixSpec, shape: tuple[int, int], name: str):
    """Normalize a matrix spec: one fixed matrix, or one matrix per step."""
    try:
        arr = np.asarray(spec, dtype=float)
    except (TypeError, ValueError):
        arr = None
    if arr is not None and arr.ndim == 2:
        if arr.shape != shape:
            raise InvalidParamsError(f"{name} must have shape {shape}, got {arr.shape}")
        return arr
    if arr is not None and arr.ndim == 3:
        if arr.shape[1:] != shape:
            raise InvalidParamsError(f"{name} steps must have shape {shape}, got {arr.shape[1:]}")
        if arr.shape[0] == 0:
            raise InvalidParamsError(f"{name} must contain at least one matrix")
        return tuple(arr)
    if isinstance(spec, (list, tuple)):
        mats = tuple(np.asarray(M, dtype=float) for M in spec)
        if not mats:
            raise InvalidParamsError(f"{name} must contain at least one matrix")
        for i, M in enumerate(mats):
            if M.shape != shape:
                raise InvalidParamsError(f"{name}[{i}] must have shape {shape}, got {M.shape}")
        return mats
    raise InvalidParamsError(f"{name} must be a matrix or a sequence of matrices")


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """World model: dimensions, dynamics, measurement rows, noise scales.

    H_t and A_t accept either one fixed matrix (time-invariant) or a
    sequence with one matrix per time step.
    """

    m: int
    n: int
    H_t: MatrixSpec
    A_t: MatrixSpec
    sigma: float
    Sigma_x: np.ndarray

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise InvalidParamsError("state and sensor dimensions must be >= 1")
        if self.sigma <= 0:
            raise InvalidParamsError("sigma must be > 0")
        object.__setattr__(self, "H_t", _as_matrix_steps(self.H_t, (self.m, self.m), "H_t"))
        object.__setattr__(self, "A_t", _as_matrix_steps(self.A_t, (self.n, self.m), "A_t"))
        object.__setattr__(
            self, "Sigma_x", validate_spd(self.Sigma_x, "Sigma_x")
        )
        if self.Sigma_x.shape != (self.m, self.m):
            raise InvalidParamsError(
                f"Sigma_x must be {(self.m, self.m)}, got {self.Sigma_x.shape}"
            )

    def H_at(self, t: int) -> np.ndarray:
        if isinstance(self.H_t, np.ndarray):
            return self.H_t
        if t >= len(self.H_t):
            raise InvalidParamsError(f"H_t defined only for t < {len(self.H_t)}")
        return self.H_t[t]

    def A_at(self, t: int) -> np.ndarray:
        if isinstance(self.A_t, np.ndarray):
            return self.A_t
        if t >= len(self.A_t):
            raise InvalidParamsError(f"A_t defined only for t < {len(self.A_t)}")
        return self.A_t[t]


@dataclass(frozen=True, eq=False)
class CovarianceState:
    """Prediction and filtered error covariance at one time step."""

    P_pred: np.ndarray
    P_filt: np.ndarray
    t: int

    def __post_init__(self):
        object.__setattr__(self, "P_pred", validate_spd(self.P_pred, "P_pred"))
        object.__setattr__(self, "P_filt", validate_spd(self.P_filt, "P_filt"))
        if self.t < 0:
            raise InvalidParamsError("time index must be non-negative")
        scale = max(1.0, float(np.trace(self.P_pred)))
        if float(np.trace(self.P_filt)) > float(np.trace(self.P_pred)) + SPD_TOL * scale:
            raise InvalidCovarianceError(
                "filtered covariance trace exceeds prediction covariance trace"
            )


class Trajectory(NamedTuple):
    states: np.ndarray        # (T, m), rows x_0 .. x_{T-1}
    measurements: np.ndarray  # (T, n), rows y_0 .. y_{T-1}


def predict_covariance(P_filt: np.ndarray, H: np.ndarray, sigma: float) -> np.ndarray:
    """Prediction step: H P H^T + sigma^2 I, symmetrized."""
    P_filt = validate_spd(P_filt, "P_filt")
    if sigma <= 0:
        raise InvalidParamsError("sigma must be > 0")
    H = np.asarray(H, dtype=float)
    m = P_filt.shape[0]
    return symmetrize(H @ P_filt @ H.T + sigma**2 * np.eye(m))


def filtered_covariance(P_pred: np.ndarray, A_S: np.ndarray, sigma: float) -> np.ndarray:
    """Measurement update via direct inversion of the information matrix.

    Returns (P_pred^{-1} + sigma^{-2} A_S^T A_S)^{-1}. This is the reference
    path; the incremental rank-one path lives in :mod:`sensorsched.scheduler`.
    """
    P_pred = validate_spd(P_pred, "P_pred")
    if sigma <= 0:
        raise InvalidParamsError("sigma must be > 0")
    A_S = np.asarray(A_S, dtype=float)
    if A_S.size == 0:
        return symmetrize(P_pred.copy())
    A_S = np.atleast_2d(A_S)
    info = np.linalg.inv(P_pred) + (A_S.T @ A_S) / sigma**2
    return symmetrize(np.linalg.inv(symmetrize(info)))


def filtered_mean(
    x_pred: np.ndarray, P_filt: np.ndarray, A_S: np.ndarray, y_S: np.ndarray, sigma: float
) -> np.ndarray:
    """Information-form mean update using the selected measurement rows."""
    A_S = np.atleast_2d(np.asarray(A_S, dtype=float))
    if A_S.shape[0] == 0:
        return np.asarray(x_pred, dtype=float).copy()
    innovation = np.asarray(y_S, dtype=float) - A_S @ x_pred
    return x_pred + P_filt @ (A_S.T @ innovation) / sigma**2


def simulate(model: StateSpaceModel, T: int, seed: int) -> Trajectory:
    """Draw one sample path of length T. Deterministic given seed."""
    if T < 1:
        raise InvalidParamsError("horizon T must be >= 1")
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(symmetrize(model.Sigma_x))
    x = chol @ rng.standard_normal(model.m)
    states = np.empty((T, model.m))
    measurements = np.empty((T, model.n))
    for t in range(T):
        states[t] = x
        measurements[t] = model.A_at(t) @ x + model.sigma * rng.standard_normal(model.n)
        if t + 1 < T:
            x = model.H_at(t) @ x + model.sigma * rng.standard_normal(model.m)
    return Trajectory(states, measurements)
