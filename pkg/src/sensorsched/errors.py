"""Exception types shared across the package."""


class SchedulingError(ValueError):
    """Base class for all scheduling/model errors."""


class InvalidCovarianceError(SchedulingError):
    """A covariance matrix is not symmetric positive definite."""


class InvalidEpsilonError(SchedulingError):
    """Sampling parameter epsilon outside [exp(-k), 1)."""


class DuplicateSelectionError(SchedulingError):
    """Attempted to add an index that is already selected."""


class InfeasibleBudgetError(SchedulingError):
    """Budget k exceeds the number of available candidates."""


class InstanceTooLargeError(SchedulingError):
    """Instance exceeds the cap of an exhaustive oracle."""


class InvalidParamsError(SchedulingError):
    """Parameters violate a precondition of a bound or sampler."""


class InvalidTripletError(SchedulingError):
    """Exchange triplet is out of range or not admissible."""


class ConfigError(SchedulingError):
    """Experiment configuration failed to parse or validate."""
