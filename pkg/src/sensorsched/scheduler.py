"""Set objective, incremental gains, and greedy sensor schedulers.

The per-step objective over a sensor subset S is

    f(S) = Tr(P_pred) - Tr(F_S^{-1}),
    F_S  = P_pred^{-1} + sigma^{-2} sum_{i in S} a_i a_i^T,

maximized under |S| = k. f is monotone with f({}) = 0 but not submodular
in general; the randomized greedy scheduler trades exactness for a large
reduction in marginal-gain evaluations while keeping an expectation
guarantee parameterized by the maximum element-wise curvature.
"""

from __future__ import annotations

import enum
import itertools
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DuplicateSelectionError,
    InfeasibleBudgetError,
    InstanceTooLargeError,
    InvalidEpsilonError,
    InvalidParamsError,
)
from .state_space import symmetrize, validate_spd

BRUTE_FORCE_CAP = 2_000_000


class Method(str, enum.Enum):
    RANDOMIZED_GREEDY = "randomized_greedy"
    CLASSIC_GREEDY = "classic_greedy"
    RANDOM_UNIFORM = "random_uniform"
    BRUTE_FORCE_OPTIMAL = "brute_force_optimal"


@dataclass
class FisherState:
    """Selected set S with incrementally maintained F_S^{-1}.

    ``gain_evals`` counts marginal-gain evaluations performed while building
    this state; it is the complexity proxy reported by the schedulers.
    """

    selected: tuple[int, ...]
    F_inv: np.ndarray
    sigma: float
    P_pred_trace: float
    gain_evals: int = 0

    @classmethod
    def initial(cls, P_pred: np.ndarray, sigma: float) -> "FisherState":
        """Empty selection: F_{}^{-1} equals the prediction covariance."""
        P_pred = validate_spd(P_pred, "P_pred")
        if sigma <= 0:
            raise InvalidParamsError("sigma must be > 0")
        return cls(
            selected=(),
            F_inv=symmetrize(P_pred).copy(),
            sigma=float(sigma),
            P_pred_trace=float(np.trace(P_pred)),
        )


@dataclass(frozen=True)
class Schedule:
    """A chosen sensor subset for one time step, with provenance."""

    indices: tuple[int, ...]
    method: Method
    epsilon: float | None
    seed: int | None
    gain_evals: int
    objective: float


def objective(fisher: FisherState) -> float:
    """f(S) = Tr(P_pred) - Tr(F_S^{-1}); zero at the empty set."""
    return fisher.P_pred_trace - float(np.trace(fisher.F_inv))


def marginal_gain(fisher: FisherState, a_j: np.ndarray) -> float:
    """Closed-form gain of adding a sensor with measurement row a_j.

        f_j(S) = a_j^T F_S^{-2} a_j / (sigma^2 + a_j^T F_S^{-1} a_j)

    Equals f(S u {j}) - f(S) without forming either inverse explicitly.
    """
    a_j = np.asarray(a_j, dtype=float)
    v = fisher.F_inv @ a_j
    fisher.gain_evals += 1
    return float(v @ v) / (fisher.sigma**2 + float(a_j @ v))


def _batch_gains(F_inv: np.ndarray, rows: np.ndarray, sigma: float) -> np.ndarray:
    """Marginal gains for many candidate rows against one state at once."""
    W = rows @ F_inv
    num = np.einsum("ij,ij->i", W, W)
    den = sigma**2 + np.einsum("ij,ij->i", W, rows)
    return num / den


def rank_one_update(fisher: FisherState, j: int, a_j: np.ndarray) -> FisherState:
    """Add sensor j, updating F_S^{-1} in O(m^2) via the rank-one formula."""
    if j in fisher.selected:
        raise DuplicateSelectionError(f"sensor {j} already selected")
    a_j = np.asarray(a_j, dtype=float)
    v = fisher.F_inv @ a_j
    den = fisher.sigma**2 + float(a_j @ v)
    u = v / math.sqrt(den)
    F_new = fisher.F_inv - u[:, None] * u[None, :]
    F_new = symmetrize(F_new)
    return replace(fisher, selected=fisher.selected + (int(j),), F_inv=F_new)


def sample_size(n: int, k: int, epsilon: float) -> int:
    """Per-iteration candidate count s = ceil((n/k) ln(1/epsilon)), in [1, n]."""
    if not 1 <= k <= n:
        raise InfeasibleBudgetError(f"need 1 <= k <= n, got k={k}, n={n}")
    lo = math.exp(-k)
    if not lo <= epsilon < 1.0:
        raise InvalidEpsilonError(
            f"epsilon must lie in [exp(-k), 1) = [{lo:.3g}, 1), got {epsilon}"
        )
    s = math.ceil((n / k) * math.log(1.0 / epsilon))
    return max(1, min(n, s))


def _greedy(
    P_pred: np.ndarray,
    A: np.ndarray,
    k: int,
    sigma: float,
    draw_candidates,
    method: Method,
    epsilon: float | None,
    seed: int | None,
) -> Schedule:
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if k > n:
        raise InfeasibleBudgetError(f"budget k={k} exceeds sensor count n={n}")
    if k < 1:
        raise InfeasibleBudgetError("budget k must be >= 1")
    state = FisherState.initial(P_pred, sigma)
    remaining = np.arange(n)
    for _ in range(k):
        cand = draw_candidates(remaining)
        cand = np.sort(cand)
        gains = _batch_gains(state.F_inv, A[cand], state.sigma)
        state.gain_evals += len(cand)
        # argmax returns the first maximizer; cand is ascending, so exact
        # ties resolve to the smallest index.
        j = int(cand[int(np.argmax(gains))])
        state = rank_one_update(state, j, A[j])
        remaining = remaining[remaining != j]
    return Schedule(
        indices=state.selected,
        method=method,
        epsilon=epsilon,
        seed=seed,
        gain_evals=state.gain_evals,
        objective=objective(state),
    )


def randomized_greedy(
    P_pred: np.ndarray, A: np.ndarray, k: int, epsilon: float, seed: int, sigma: float
) -> Schedule:
    """Greedy selection scanning only s random candidates per iteration.

    Each of the k iterations samples min(s, remaining) indices uniformly
    without replacement from the unselected pool, adds the best by marginal
    gain (ties to the smallest index), and applies the rank-one update.
    Deterministic given seed. With epsilon = exp(-k) the sample always
    covers the whole pool and the output coincides with classic greedy.
    """
    n = np.asarray(A).shape[0]
    s = sample_size(n, k, epsilon)
    rng = np.random.default_rng(seed)

    def draw(remaining: np.ndarray) -> np.ndarray:
        if len(remaining) <= s:
            return remaining
        return rng.choice(remaining, size=s, replace=False)

    return _greedy(P_pred, A, k, sigma, draw, Method.RANDOMIZED_GREEDY, epsilon, seed)


def classic_greedy(P_pred: np.ndarray, A: np.ndarray, k: int, sigma: float) -> Schedule:
    """Full-scan greedy: every unselected sensor is evaluated each iteration."""
    return _greedy(
        P_pred, A, k, sigma, lambda remaining: remaining, Method.CLASSIC_GREEDY, None, None
    )


def brute_force_optimal(
    P_pred: np.ndarray,
    A: np.ndarray,
    k: int,
    sigma: float,
    cap: int = BRUTE_FORCE_CAP,
) -> Schedule:
    """Exhaustive search over all k-subsets; the optimality oracle.

    Objective values come from direct inversion, independent of the
    incremental path used by the greedy schedulers. Ties resolve to the
    lexicographically smallest subset. ``gain_evals`` reports the number of
    full objective evaluations.
    """
    P_pred = validate_spd(P_pred, "P_pred")
    if sigma <= 0:
        raise InvalidParamsError("sigma must be > 0")
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if not 1 <= k <= n:
        raise InfeasibleBudgetError(f"need 1 <= k <= n, got k={k}, n={n}")
    total = math.comb(n, k)
    if total > cap:
        raise InstanceTooLargeError(
            f"C({n},{k}) = {total} exceeds the brute-force cap {cap}"
        )
    P_inv = symmetrize(np.linalg.inv(P_pred))
    trace_P = float(np.trace(P_pred))
    best_set: tuple[int, ...] | None = None
    best_val = -np.inf
    for S in itertools.combinations(range(n), k):
        A_S = A[list(S)]
        F = P_inv + (A_S.T @ A_S) / sigma**2
        val = trace_P - float(np.trace(np.linalg.inv(F)))
        if val > best_val:
            best_val = val
            best_set = S
    assert best_set is not None
    return Schedule(
        indices=best_set,
        method=Method.BRUTE_FORCE_OPTIMAL,
        epsilon=None,
        seed=None,
        gain_evals=total,
        objective=best_val,
    )


def random_schedule(
    n: int,
    k: int,
    seed: int,
    P_pred: np.ndarray | None = None,
    A: np.ndarray | None = None,
    sigma: float | None = None,
) -> Schedule:
    """Uniform random k-subset baseline. Objective filled when the instance
    (P_pred, A, sigma) is supplied, NaN otherwise."""
    if not 1 <= k <= n:
        raise InfeasibleBudgetError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    indices = tuple(sorted(int(i) for i in rng.choice(n, size=k, replace=False)))
    value = math.nan
    if P_pred is not None and A is not None and sigma is not None:
        A = np.asarray(A, dtype=float)
        state = FisherState.initial(P_pred, sigma)
        for j in indices:
            state = rank_one_update(state, j, A[j])
        value = objective(state)
    return Schedule(
        indices=indices,
        method=Method.RANDOM_UNIFORM,
        epsilon=None,
        seed=seed,
        gain_evals=0,
        objective=value,
    )


def guarantee_alpha(c: float, epsilon: float, beta: float = 1.0) -> float:
    """Expectation-guarantee factor alpha = 1 - e^{-1/c} - epsilon^beta / c.

    c must be >= 1 (use max(1, C_max)). A non-positive alpha means the bound
    is vacuous; it is clamped to 0 and a warning is emitted.
    """
    if c < 1.0:
        raise InvalidParamsError(f"curvature constant c must be >= 1, got {c}")
    if beta < 1.0:
        raise InvalidParamsError(f"beta must be >= 1, got {beta}")
    alpha = 1.0 - math.exp(-1.0 / c) - epsilon**beta / c
    if alpha < 0.0:
        warnings.warn(
            f"guarantee is vacuous (alpha = {alpha:.3g} clamped to 0)", stacklevel=2
        )
        return 0.0
    return alpha


def beta_exponent(s: int, n: int) -> float:
    """Exponent tightening the epsilon term for sample size s out of n:

        beta = 1 + max(0, s/(2n) - 1/(2(n - s)))

    For s = n (full scan) the correction is undefined and not needed;
    returns 1.
    """
    if not 1 <= s <= n:
        raise InvalidParamsError(f"need 1 <= s <= n, got s={s}, n={n}")
    if s == n:
        return 1.0
    return 1.0 + max(0.0, s / (2 * n) - 1.0 / (2 * (n - s)))


def mse_bound(alpha: float, mse_opt: float, trace_P_pred: float) -> float:
    """Expected-MSE bound: alpha * MSE_opt + (1 - alpha) * Tr(P_pred)."""
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParamsError(f"alpha must lie in [0, 1], got {alpha}")
    if mse_opt > trace_P_pred:
        raise InvalidParamsError("optimal MSE cannot exceed the prior trace")
    return alpha * mse_opt + (1.0 - alpha) * trace_P_pred
