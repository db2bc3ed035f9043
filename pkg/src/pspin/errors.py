"""Exception types shared across the toolkit."""


class PreconditionError(ValueError):
    """An operation was called outside its documented domain."""


class FeasibilityError(ValueError):
    """An order parameter violates the feasibility margin L - int(alpha) > 0."""


class ResourceCapError(RuntimeError):
    """A disorder sample would exceed the configured memory cap."""


class InconsistentSolutionError(RuntimeError):
    """A solution fails internal consistency identities; upstream minimizer is suspect."""


class ConvergenceError(RuntimeError):
    """Optimizer stopped before its certificate passed.

    Carries the best iterate found so callers can inspect or serialize it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConfigError(ValueError):
    """Experiment config failed validation; message names the offending field."""
