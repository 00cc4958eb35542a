"""Randomized greedy sensor scheduling for Kalman filtering.

Library layout:

- ``state_space``: world model, simulation, covariance recursions
- ``scheduler``: set objective, rank-one updates, greedy/baseline/oracle
  schedulers, guarantee arithmetic
- ``curvature``: exact and sampled element-wise curvature, probabilistic
  curvature bound for random measurement rows
- ``network_exchange``: balanced measurement exchange across a multi-node
  network with a relay
- ``harness``: config-driven experiment CLI
"""

from . import curvature, network_exchange, scheduler, state_space
from .errors import SchedulingError

__version__ = "0.1.0"

__all__ = [
    "curvature",
    "network_exchange",
    "scheduler",
    "state_space",
    "SchedulingError",
    "__version__",
]
