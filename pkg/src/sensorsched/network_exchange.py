"""Balanced measurement exchange across a multi-node estimation network.

A relay schedules deliveries of measurement rows between sensing nodes.
A triplet (dst, src, meas) delivers the meas-th local row of node src to
node dst. The scheduler greedily maximizes

    u(S) = f(S) + gamma * g(S)

where f(S) is the total reduction in the nodes' MSE (traces of inverse
Fisher matrices) and g(S) = sum_i log(1 + |O_i| / |L_i|) rewards spreading
deliveries evenly over receivers (|O_i| received, |L_i| local counts).
g is monotone submodular; f is monotone weak submodular, so the greedy
schedule carries a (1 - e^{-1/c}) guarantee with c = max(1, curvature).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .curvature import CurvatureReport, curvature_from_gain_table
from .errors import (
    InfeasibleBudgetError,
    InstanceTooLargeError,
    InvalidParamsError,
    InvalidTripletError,
)
from .scheduler import _batch_gains
from .state_space import symmetrize, validate_spd

EXCHANGE_CURVATURE_CAP = 12


class ExchangeTriplet(NamedTuple):
    """Delivery of src's meas-th local measurement row to dst (0-based)."""

    dst: int
    src: int
    meas: int


@dataclass(frozen=True, eq=False)
class ExchangeNetwork:
    """Multi-node model: per-node rows, noise scales, inverse Fisher states.

    H[i] holds node i's local measurement rows (|L_i| x state_dim); F_inv[i]
    is the current inverse Fisher matrix, i.e. the node's filtered error
    covariance given its local rows plus any applied deliveries; received[i]
    counts deliveries applied so far.
    """

    H: tuple[np.ndarray, ...]
    sigmas: tuple[float, ...]
    F_inv: tuple[np.ndarray, ...]
    A_dyn: np.ndarray
    Q: np.ndarray
    received: tuple[int, ...]

    def __post_init__(self):
        H = tuple(np.atleast_2d(np.asarray(Hi, dtype=float)) for Hi in self.H)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "sigmas", tuple(float(s) for s in self.sigmas))
        object.__setattr__(
            self,
            "F_inv",
            tuple(validate_spd(Fi, f"F_inv[{i}]") for i, Fi in enumerate(self.F_inv)),
        )
        object.__setattr__(self, "A_dyn", np.asarray(self.A_dyn, dtype=float))
        object.__setattr__(self, "Q", np.asarray(self.Q, dtype=float))
        if len(self.H) < 2:
            raise InvalidParamsError("an exchange network needs at least 2 nodes")
        if not len(self.H) == len(self.sigmas) == len(self.F_inv) == len(self.received):
            raise InvalidParamsError("per-node field lengths disagree")
        d = self.state_dim
        for i, Hi in enumerate(self.H):
            if Hi.shape[0] < 1:
                raise InvalidParamsError(f"node {i} must own at least one measurement")
            if Hi.shape[1] != d:
                raise InvalidParamsError(f"H[{i}] row length {Hi.shape[1]} != state dim {d}")
        for i, Fi in enumerate(self.F_inv):
            if Fi.shape != (d, d):
                raise InvalidParamsError(f"F_inv[{i}] must be {d}x{d}")
        if any(s <= 0 for s in self.sigmas):
            raise InvalidParamsError("noise scales must be > 0")
        if any(r < 0 for r in self.received):
            raise InvalidParamsError("received counts must be non-negative")

    @property
    def m_nodes(self) -> int:
        return len(self.H)

    @property
    def state_dim(self) -> int:
        return self.A_dyn.shape[0]

    @property
    def local_sizes(self) -> tuple[int, ...]:
        return tuple(Hi.shape[0] for Hi in self.H)

    @classmethod
    def from_priors(
        cls,
        H: Sequence[np.ndarray],
        sigmas: Sequence[float],
        P_pred: Sequence[np.ndarray],
        A_dyn: np.ndarray,
        Q: np.ndarray,
    ) -> "ExchangeNetwork":
        """Build the pre-exchange state: F_i = P_i^{-1} + sigma_i^{-2} H_i^T H_i."""
        F_inv = []
        for Hi, s, Pi in zip(H, sigmas, P_pred):
            Hi = np.atleast_2d(np.asarray(Hi, dtype=float))
            Pi = validate_spd(Pi, "P_pred")
            F = symmetrize(np.linalg.inv(Pi)) + (Hi.T @ Hi) / float(s) ** 2
            F_inv.append(symmetrize(np.linalg.inv(symmetrize(F))))
        return cls(
            H=tuple(H),
            sigmas=tuple(sigmas),
            F_inv=tuple(F_inv),
            A_dyn=A_dyn,
            Q=Q,
            received=(0,) * len(tuple(H)),
        )


@dataclass(frozen=True)
class ExchangeSchedule:
    """Ordered deliveries chosen for one scheduling round."""

    triplets: tuple[ExchangeTriplet, ...]
    gamma: float
    K: int
    utility: float
    per_node_mse: np.ndarray
    truncated: bool = False


def validate_triplet(network: ExchangeNetwork, triplet: ExchangeTriplet) -> None:
    dst, src, meas = triplet
    m = network.m_nodes
    if not (0 <= dst < m and 0 <= src < m):
        raise InvalidTripletError(f"node index out of range in {triplet}")
    if dst == src:
        raise InvalidTripletError(f"self-delivery {triplet} is not admissible")
    if not 0 <= meas < network.local_sizes[src]:
        raise InvalidTripletError(
            f"measurement index {meas} out of range for node {src} "
            f"(has {network.local_sizes[src]} rows)"
        )


def admissible_triplets(network: ExchangeNetwork) -> list[ExchangeTriplet]:
    """All valid (dst, src, meas) deliveries, in lexicographic order."""
    m = network.m_nodes
    return [
        ExchangeTriplet(dst, src, meas)
        for dst in range(m)
        for src in range(m)
        if src != dst
        for meas in range(network.local_sizes[src])
    ]


def g_marginal(counts: Sequence[int], local_sizes: Sequence[int], dst: int) -> float:
    """Balance-term gain of one more delivery to dst:

        log(1 + 1 / (|O_dst| + |L_dst|))

    Independent of which (src, meas) is delivered; strictly positive and
    strictly decreasing in the receive count.
    """
    if local_sizes[dst] < 1:
        raise InvalidParamsError("destination must own at least one measurement")
    return math.log(1.0 + 1.0 / (counts[dst] + local_sizes[dst]))


def f_marginal(network: ExchangeNetwork, triplet: ExchangeTriplet) -> float:
    """MSE-term gain of a delivery; the rank-one gain against dst's Fisher
    state with the source's noise scale."""
    validate_triplet(network, triplet)
    h = network.H[triplet.src][triplet.meas]
    return float(
        _batch_gains(network.F_inv[triplet.dst], h[None, :], network.sigmas[triplet.src])[0]
    )


def utility_marginal(network: ExchangeNetwork, triplet: ExchangeTriplet, gamma: float) -> float:
    """u gain = f gain + gamma * g gain."""
    if gamma < 0:
        raise InvalidParamsError("gamma must be >= 0")
    return f_marginal(network, triplet) + gamma * g_marginal(
        network.received, network.local_sizes, triplet.dst
    )


def apply_triplet(network: ExchangeNetwork, triplet: ExchangeTriplet) -> ExchangeNetwork:
    """Rank-one update of dst's inverse Fisher matrix; bumps its count."""
    validate_triplet(network, triplet)
    dst, src, meas = triplet
    h = network.H[src][meas]
    F_inv = network.F_inv[dst]
    v = F_inv @ h
    den = network.sigmas[src] ** 2 + float(h @ v)
    F_new = symmetrize(F_inv - np.outer(v, v) / den)
    new_F = list(network.F_inv)
    new_F[dst] = F_new
    new_counts = list(network.received)
    new_counts[dst] += 1
    return ExchangeNetwork(
        H=network.H,
        sigmas=network.sigmas,
        F_inv=tuple(new_F),
        A_dyn=network.A_dyn,
        Q=network.Q,
        received=tuple(new_counts),
    )


def apply_schedule(
    network: ExchangeNetwork, triplets: Sequence[ExchangeTriplet]
) -> ExchangeNetwork:
    for t in triplets:
        network = apply_triplet(network, t)
    return network


def utility_of(
    network: ExchangeNetwork, triplets: Sequence[ExchangeTriplet], gamma: float
) -> float:
    """u(S) evaluated from scratch against the given baseline network.

    f uses direct inversion of each node's full information matrix; g
    telescopes the balance marginals from the baseline receive counts.
    """
    if gamma < 0:
        raise InvalidParamsError("gamma must be >= 0")
    if len(set(triplets)) != len(tuple(triplets)):
        raise InvalidTripletError("schedule contains a duplicate triplet")
    adds: dict[int, list[np.ndarray]] = {}
    extra = [0] * network.m_nodes
    for t in triplets:
        validate_triplet(network, t)
        adds.setdefault(t.dst, []).append(network.H[t.src][t.meas] / network.sigmas[t.src])
        extra[t.dst] += 1
    f_val = 0.0
    for i, rows in adds.items():
        F = symmetrize(np.linalg.inv(network.F_inv[i]))
        for r in rows:
            F = F + np.outer(r, r)
        f_val += float(np.trace(network.F_inv[i])) - float(np.trace(np.linalg.inv(F)))
    g_val = 0.0
    for i in range(network.m_nodes):
        o0, L = network.received[i], network.local_sizes[i]
        g_val += math.log(1.0 + (o0 + extra[i]) / L) - math.log(1.0 + o0 / L)
    return f_val + gamma * g_val


def greedy_exchange(
    network: ExchangeNetwork, K: int, gamma: float, seed: int | None = None
) -> ExchangeSchedule:
    """Greedy selection of K deliveries by utility marginal.

    Each iteration scans every admissible not-yet-selected triplet and adds
    the argmax (ties resolve lexicographically on (dst, src, meas)). Fully
    deterministic; ``seed`` is accepted for API symmetry and ignored. If
    fewer than K admissible triplets exist the schedule truncates and is
    flagged.
    """
    del seed
    if K < 1:
        raise InfeasibleBudgetError("budget K must be >= 1")
    if gamma < 0:
        raise InvalidParamsError("gamma must be >= 0")
    m = network.m_nodes
    sizes = network.local_sizes
    taken = {
        (dst, src): np.zeros(sizes[src], dtype=bool)
        for dst in range(m)
        for src in range(m)
        if src != dst
    }
    total_admissible = sum(sizes[src] for dst, src in taken)
    if total_admissible == 0:
        raise InvalidParamsError("network has no admissible triplets")
    net = network
    chosen: list[ExchangeTriplet] = []
    utility = 0.0
    for _ in range(min(K, total_admissible)):
        best_u = -np.inf
        best: ExchangeTriplet | None = None
        for dst in range(m):
            g_gain = gamma * g_marginal(net.received, sizes, dst)
            for src in range(m):
                if src == dst:
                    continue
                gains = _batch_gains(net.F_inv[dst], net.H[src], net.sigmas[src]) + g_gain
                gains[taken[(dst, src)]] = -np.inf
                meas = int(np.argmax(gains))
                if gains[meas] > best_u:
                    best_u = float(gains[meas])
                    best = ExchangeTriplet(dst, src, meas)
        assert best is not None
        taken[(best.dst, best.src)][best.meas] = True
        chosen.append(best)
        utility += best_u
        net = apply_triplet(net, best)
    return ExchangeSchedule(
        triplets=tuple(chosen),
        gamma=float(gamma),
        K=K,
        utility=utility,
        per_node_mse=np.array([float(np.trace(Fi)) for Fi in net.F_inv]),
        truncated=len(chosen) < K,
    )


def brute_force_exchange(
    network: ExchangeNetwork, K: int, gamma: float, cap: int = 2_000_000
) -> ExchangeSchedule:
    """Exhaustive utility maximization over all K-subsets of deliveries.

    u is monotone, so the optimum uses the full budget. Ties resolve to the
    lexicographically smallest triplet set.
    """
    if K < 1:
        raise InfeasibleBudgetError("budget K must be >= 1")
    ground = admissible_triplets(network)
    size = min(K, len(ground))
    total = math.comb(len(ground), size)
    if total > cap:
        raise InstanceTooLargeError(
            f"C({len(ground)},{size}) = {total} exceeds the brute-force cap {cap}"
        )
    best_val = -np.inf
    best: tuple[ExchangeTriplet, ...] | None = None
    for combo in itertools.combinations(ground, size):
        val = utility_of(network, combo, gamma)
        if val > best_val:
            best_val = val
            best = combo
    assert best is not None
    net = apply_schedule(network, best)
    return ExchangeSchedule(
        triplets=best,
        gamma=float(gamma),
        K=K,
        utility=best_val,
        per_node_mse=np.array([float(np.trace(Fi)) for Fi in net.F_inv]),
        truncated=size < K,
    )


def exchange_curvature(
    network: ExchangeNetwork, gamma: float, cap: int = EXCHANGE_CURVATURE_CAP
) -> CurvatureReport:
    """Exact element-wise curvature of u over the admissible-triplet ground
    set, with gains taken from from-scratch utility differences."""
    ground = admissible_triplets(network)
    nt = len(ground)
    if nt < 2:
        raise InvalidParamsError("curvature needs at least 2 admissible triplets")
    if nt > cap:
        raise InstanceTooLargeError(f"{nt} admissible triplets exceed the cap {cap}")
    u_vals = np.empty(1 << nt)
    for mask in range(1 << nt):
        subset = [ground[i] for i in range(nt) if mask >> i & 1]
        u_vals[mask] = utility_of(network, subset, gamma)
    G = np.full((1 << nt, nt), np.nan)
    for mask in range(1 << nt):
        for i in range(nt):
            if not mask >> i & 1:
                G[mask, i] = u_vals[mask | (1 << i)] - u_vals[mask]
    C_l, skipped = curvature_from_gain_table(G, nt)
    C_max = float(np.nanmax(C_l))
    return CurvatureReport(
        C_l=C_l,
        C_max=C_max,
        mode="exact",
        samples=0,
        c_effective=max(1.0, C_max),
        skipped=skipped,
    )


def spectral_curvature_bound(
    network: ExchangeNetwork, H_stacked: np.ndarray | None = None
) -> tuple[bool, float]:
    """Closed-form curvature bound for f from the nodes' Fisher spectra.

    With lam_M = max_i lambda_max(F_i) and lam_m = min_i lambda_min(F_i),
    the bound (2 lam_M / lam_m)^3 applies when
    lambda_max(H^T H) / sigma^2 <= lam_M for the stacked observation matrix.
    Returns (condition_holds, bound); the bound is reported either way.
    Requires a common noise scale across nodes.
    """
    if len(set(network.sigmas)) != 1:
        raise InvalidParamsError("the spectral bound assumes a common noise scale")
    sigma = network.sigmas[0]
    if H_stacked is None:
        H_stacked = np.vstack(network.H)
    inv_eigs = [np.linalg.eigvalsh(Fi) for Fi in network.F_inv]
    lam_M = max(1.0 / float(e[0]) for e in inv_eigs)
    lam_m = min(1.0 / float(e[-1]) for e in inv_eigs)
    top = float(np.linalg.eigvalsh(H_stacked.T @ H_stacked)[-1])
    condition = top / sigma**2 <= lam_M
    return condition, (2.0 * lam_M / lam_m) ** 3


def balance_metrics(network: ExchangeNetwork) -> tuple[float, float]:
    """Total MSE and the sum of pairwise MSE distances across nodes."""
    mses = [float(np.trace(Fi)) for Fi in network.F_inv]
    pairwise = sum(abs(a - b) for a, b in itertools.combinations(mses, 2))
    return sum(mses), pairwise


def predict_step(network: ExchangeNetwork) -> ExchangeNetwork:
    """Advance every node one time step.

    Each node's filtered covariance (its current inverse Fisher matrix)
    propagates through the dynamics, then the node re-acquires its local
    rows: P_i = A F_inv_i A^T + Q and F_i = P_i^{-1} + sigma_i^{-2} H_i^T H_i.
    Receive counts reset for the next scheduling round.
    """
    P_pred = [
        symmetrize(network.A_dyn @ Fi @ network.A_dyn.T + network.Q) for Fi in network.F_inv
    ]
    return ExchangeNetwork.from_priors(
        network.H, network.sigmas, P_pred, network.A_dyn, network.Q
    )
