"""Shared instance generators for the test suite."""

from __future__ import annotations

import numpy as np


def random_spd(rng: np.random.Generator, m: int, scale: float = 1.0) -> np.ndarray:
    """Well-conditioned random SPD matrix."""
    W = rng.standard_normal((m, 2 * m))
    M = scale * (W @ W.T / (2 * m) + 0.5 * np.eye(m))
    return 0.5 * (M + M.T)


def random_instance(
    rng: np.random.Generator, m: int, n: int, row_scale: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Random (P_pred, A) scheduling instance."""
    return random_spd(rng, m), row_scale * rng.standard_normal((n, m))
