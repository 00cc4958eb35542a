"""Element-wise curvature of the scheduling objective, exact and sampled.

For a monotone set function f over ground set [n], the distance-l curvature
is the worst ratio of marginal gains across nested sets,

    C_l = max over {S subset T subset [n], i not in T, |T \\ S| = l}
          of  f_i(T) / f_i(S),

and C_max = max_l C_l. C_max <= 1 iff f is submodular; the scheduling
objective is not submodular in general, so C_max > 1 is expected and never
clamped. The module also evaluates a probabilistic upper bound on C_max for
i.i.d. random measurement rows, together with the spectral event under
which it applies and its success-probability lower bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InstanceTooLargeError, InvalidParamsError
from .state_space import symmetrize, validate_spd

EXACT_CAP = 10
DEGENERATE_GAIN_TOL = 1e-14

# (T, S) proper-submask pairs per ground-set size; built once per n.
_PAIR_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


@dataclass(frozen=True)
class CurvatureReport:
    """Per-distance curvatures C_l (l = 1..n-1) and their maximum.

    c_effective applies the guarantee's case split: 1 when C_max <= 1,
    C_max otherwise. ``skipped`` counts triples whose denominator gain fell
    below the degeneracy tolerance and were excluded from the max.
    """

    C_l: np.ndarray
    C_max: float
    mode: str
    samples: int
    c_effective: float
    skipped: int


@dataclass(frozen=True)
class RandomRowParams:
    """Inputs of the probabilistic curvature bound for i.i.d. rows.

    Rows a_j are zero-mean with covariance sigma_h^2 I_m and squared norm at
    most C; q is the spectral-deviation level; lambda_max_P / lambda_min_P
    are the extreme eigenvalues of the prediction covariance.
    """

    sigma_h: float
    C: float
    q: float
    n: int
    m: int
    lambda_max_P: float
    lambda_min_P: float
    sigma: float

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise InvalidParamsError("n and m must be >= 1")
        if self.sigma <= 0 or self.q <= 0 or self.C <= 0 or self.sigma_h < 0:
            raise InvalidParamsError("sigma, q, C must be positive; sigma_h non-negative")
        if self.lambda_min_P <= 0 or self.lambda_max_P < self.lambda_min_P:
            raise InvalidParamsError("need 0 < lambda_min_P <= lambda_max_P")
        if self.C < self.m * self.sigma_h**2 - 1e-12:
            raise InvalidParamsError(
                "norm bound C must be at least m * sigma_h^2 (trace consistency)"
            )


@dataclass(frozen=True)
class EmpiricalCurvatureReport:
    """Outcome of Monte-Carlo verification of the probabilistic bound."""

    trials: int
    event_count: int
    event_frequency: float
    conditional_violations: int
    curvature_bound: float
    probability_lower_bound: float
    max_curvature: float


def _pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    """All (T, S) bitmask pairs with S a proper submask of T, T != [n]."""
    cached = _PAIR_CACHE.get(n)
    if cached is not None:
        return cached
    ts, ss = [], []
    full = (1 << n) - 1
    for T in range(1, full):
        sub = (T - 1) & T
        while True:
            ts.append(T)
            ss.append(sub)
            if sub == 0:
                break
            sub = (sub - 1) & T
    pair = (np.asarray(ts, dtype=np.int64), np.asarray(ss, dtype=np.int64))
    _PAIR_CACHE[n] = pair
    return pair


def _membership(n: int) -> np.ndarray:
    masks = np.arange(1 << n, dtype=np.int64)
    return ((masks[:, None] >> np.arange(n)) & 1).astype(bool)


def _row_outers(A: np.ndarray, sigma: float) -> np.ndarray:
    return A[:, :, None] * A[:, None, :] / sigma**2


def _subset_fisher(P_inv: np.ndarray, outers: np.ndarray, indices) -> np.ndarray:
    """Information matrix of a subset, accumulated in descending-index order.

    Matches the accumulation order of the exhaustive gain table bit for bit,
    so sampled and exact paths agree exactly on shared triples.
    """
    F = P_inv
    for i in sorted(indices, reverse=True):
        F = F + outers[i]
    return F


def _gains_against(F_inv: np.ndarray, A: np.ndarray, sigma: float) -> np.ndarray:
    W = A @ F_inv
    num = np.einsum("nk,nk->n", W, W)
    den = sigma**2 + np.einsum("nk,nk->n", W, A)
    return num / den


def _subset_gain_row(
    P_inv: np.ndarray, outers: np.ndarray, indices, A: np.ndarray, sigma: float
) -> np.ndarray:
    """Gains of every candidate row against one subset's Fisher state.

    The single shared evaluation path for both the exhaustive table and the
    sampled estimator: identical inputs produce identical bits, which keeps
    sampled maxima exactly dominated by exact maxima.
    """
    F_inv = np.linalg.inv(_subset_fisher(P_inv, outers, indices))
    return _gains_against(F_inv, A, sigma)


def _gain_table(P_pred: np.ndarray, A: np.ndarray, sigma: float) -> np.ndarray:
    """Marginal gains G[mask, i] for every subset mask and every i not in it."""
    n, m = A.shape
    P_inv = symmetrize(np.linalg.inv(P_pred))
    outers = _row_outers(A, sigma)
    G = np.empty((1 << n, n))
    for mask in range(1 << n):
        indices = [i for i in range(n) if mask >> i & 1]
        G[mask] = _subset_gain_row(P_inv, outers, indices, A, sigma)
    G[_membership(n)] = np.nan
    return G


def curvature_from_gain_table(
    G: np.ndarray, n: int, tol: float = DEGENERATE_GAIN_TOL, chunk: int = 200_000
) -> tuple[np.ndarray, int]:
    """Max gain ratios per distance l from a full (2^n, n) gain table."""
    T_arr, S_arr = _pairs(n)
    member = _membership(n)
    pc = member.sum(axis=1).astype(np.int64)
    C_l = np.full(n - 1, -np.inf)
    skipped = 0
    for lo in range(0, len(T_arr), chunk):
        Tc = T_arr[lo : lo + chunk]
        Sc = S_arr[lo : lo + chunk]
        gT = G[Tc]
        gS = G[Sc]
        outside = ~member[Tc]
        nondegenerate = gS > tol
        valid = outside & nondegenerate
        skipped += int((outside & ~nondegenerate).sum())
        with np.errstate(invalid="ignore"):
            ratios = np.where(valid, gT / np.where(valid, gS, 1.0), -np.inf)
        np.maximum.at(C_l, pc[Tc] - pc[Sc] - 1, ratios.max(axis=1))
    C_l[np.isneginf(C_l)] = np.nan
    return C_l, skipped


def exact_curvature(
    P_pred: np.ndarray, A: np.ndarray, sigma: float, cap: int = EXACT_CAP
) -> CurvatureReport:
    """Exhaustive curvature over all valid (S, T, i) triples.

    Gains are evaluated on states built by direct inversion. Enumeration is
    exponential in n; instances beyond the cap must use sampled_curvature.
    """
    P_pred = validate_spd(P_pred, "P_pred")
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n < 2:
        raise InvalidParamsError("curvature needs at least 2 ground elements")
    if n > cap:
        raise InstanceTooLargeError(f"n={n} exceeds the exact-curvature cap {cap}")
    if sigma <= 0:
        raise InvalidParamsError("sigma must be > 0")
    G = _gain_table(P_pred, A, sigma)
    C_l, skipped = curvature_from_gain_table(G, n)
    C_max = float(np.nanmax(C_l))
    return CurvatureReport(
        C_l=C_l,
        C_max=C_max,
        mode="exact",
        samples=0,
        c_effective=max(1.0, C_max),
        skipped=skipped,
    )


def sampled_curvature(
    P_pred: np.ndarray, A: np.ndarray, sigma: float, samples: int, seed: int
) -> CurvatureReport:
    """Lower-bound curvature estimate from uniformly sampled triples.

    Each draw picks a size pair |S| < |T| <= n-1 uniformly over valid pairs,
    then uniform subsets and a uniform outside element. Deterministic given
    seed; draws are sequential, so a longer run with the same seed extends a
    shorter one and its maximum can only grow.
    """
    P_pred = validate_spd(P_pred, "P_pred")
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n < 2:
        raise InvalidParamsError("curvature needs at least 2 ground elements")
    if samples < 1:
        raise InvalidParamsError("samples must be >= 1")
    if sigma <= 0:
        raise InvalidParamsError("sigma must be > 0")
    rng = np.random.default_rng(seed)
    size_pairs = [(s_sz, t_sz) for t_sz in range(1, n) for s_sz in range(t_sz)]
    P_inv = symmetrize(np.linalg.inv(P_pred))
    outers = _row_outers(A, sigma)
    all_idx = np.arange(n)
    C_l = np.full(n - 1, -np.inf)
    skipped = 0
    for _ in range(samples):
        s_sz, t_sz = size_pairs[int(rng.integers(len(size_pairs)))]
        T = rng.choice(n, size=t_sz, replace=False)
        S = rng.choice(T, size=s_sz, replace=False) if s_sz else np.empty(0, dtype=int)
        comp = np.setdiff1d(all_idx, T, assume_unique=False)
        i = int(comp[int(rng.integers(len(comp)))])
        g_S = _subset_gain_row(P_inv, outers, [int(x) for x in S], A, sigma)[i]
        g_T = _subset_gain_row(P_inv, outers, [int(x) for x in T], A, sigma)[i]
        if g_S <= DEGENERATE_GAIN_TOL:
            skipped += 1
            continue
        l = t_sz - s_sz
        C_l[l - 1] = max(C_l[l - 1], g_T / g_S)
    C_l[np.isneginf(C_l)] = np.nan
    C_max = float(np.nanmax(C_l)) if not np.isnan(C_l).all() else math.nan
    return CurvatureReport(
        C_l=C_l,
        C_max=C_max,
        mode="sampled",
        samples=samples,
        c_effective=max(1.0, C_max) if not math.isnan(C_max) else math.nan,
        skipped=skipped,
    )


def information_floor(
    lambda_min_P: float, sigma: float, sigma_h: float, n: int, q: float
) -> float:
    """Tightest admissible lower bound phi on the filtered information level:

        phi = (1/lambda_min(P_pred) + (n sigma_h^2 + q) / sigma^2)^{-1}
    """
    if lambda_min_P <= 0 or sigma <= 0 or q <= 0 or n < 1 or sigma_h < 0:
        raise InvalidParamsError("inputs must be positive (sigma_h may be zero)")
    return 1.0 / (1.0 / lambda_min_P + (n * sigma_h**2 + q) / sigma**2)


def random_row_curvature_bound(params: RandomRowParams) -> float:
    """Upper bound on C_max under the spectral event:

        C_max <= lambda_max(P)^2 (sigma^2 + lambda_max(P) C)
                 / (phi^2 (sigma^2 + phi C))
    """
    phi = information_floor(params.lambda_min_P, params.sigma, params.sigma_h, params.n, params.q)
    lam = params.lambda_max_P
    s2 = params.sigma**2
    return lam**2 * (s2 + lam * params.C) / (phi**2 * (s2 + phi * params.C))


def spectral_event_probability(params: RandomRowParams) -> float:
    """Lower bound on the probability that the spectral event holds:

        p >= 1 - m exp(-(q^2 / 2) / ((C - sigma_h^2)(n sigma_h^2 + q/3)))

    clamped to [0, 1].
    """
    var_h = params.sigma_h**2
    if params.C <= var_h:
        raise InvalidParamsError("need C > sigma_h^2 for the variance factor")
    expo = -(params.q**2 / 2.0) / ((params.C - var_h) * (params.n * var_h + params.q / 3.0))
    return min(1.0, max(0.0, 1.0 - params.m * math.exp(expo)))


def sphere_rows(n: int, m: int, sigma_h: float, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. rows uniform on the sphere of radius sqrt(m) * sigma_h.

    Gives covariance sigma_h^2 I_m exactly and squared norm m * sigma_h^2
    almost surely, the simplest distribution meeting both hypotheses of the
    probabilistic curvature bound at once.
    """
    X = rng.standard_normal((n, m))
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return math.sqrt(m) * sigma_h * X / norms


def empirical_curvature_check(
    m: int,
    n: int,
    sigma_h: float,
    C: float,
    q: float,
    sigma: float,
    P_pred: np.ndarray,
    trials: int,
    seed: int,
    curvature_cap: int = EXACT_CAP,
) -> EmpiricalCurvatureReport:
    """Monte-Carlo check of the probabilistic curvature bound.

    Per trial: draw rows from the sphere sampler, record whether the
    spectral event lambda_max(sum_j a_j a_j^T) <= n sigma_h^2 + q holds,
    and whenever it does, compare the exact C_max against the bound. Trials
    use independent derived substreams, so results do not depend on
    execution order.
    """
    if trials < 1:
        raise InvalidParamsError("trials must be >= 1")
    if C < m * sigma_h**2 - 1e-12:
        raise InvalidParamsError(
            "sphere sampler cannot satisfy the norm bound: need C >= m * sigma_h^2"
        )
    P_pred = validate_spd(P_pred, "P_pred")
    eigs = np.linalg.eigvalsh(P_pred)
    params = RandomRowParams(
        sigma_h=sigma_h,
        C=C,
        q=q,
        n=n,
        m=m,
        lambda_max_P=float(eigs[-1]),
        lambda_min_P=float(eigs[0]),
        sigma=sigma,
    )
    bound = random_row_curvature_bound(params)
    p_lb = spectral_event_probability(params)
    threshold = n * sigma_h**2 + q
    event_count = 0
    violations = 0
    max_cmax = -math.inf
    for trial in range(trials):
        rng = np.random.default_rng((seed, trial))
        A = sphere_rows(n, m, sigma_h, rng)
        lam_top = float(np.linalg.eigvalsh(A.T @ A)[-1])
        if lam_top <= threshold:
            event_count += 1
            c_max = exact_curvature(P_pred, A, sigma, cap=curvature_cap).C_max
            max_cmax = max(max_cmax, c_max)
            if c_max > bound:
                violations += 1
    return EmpiricalCurvatureReport(
        trials=trials,
        event_count=event_count,
        event_frequency=event_count / trials,
        conditional_violations=violations,
        curvature_bound=bound,
        probability_lower_bound=p_lb,
        max_curvature=max_cmax if event_count else math.nan,
    )
