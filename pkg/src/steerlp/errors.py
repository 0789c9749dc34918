"""Exception types shared across the pipeline."""


class SteerError(Exception):
    """Base class for pipeline errors."""


class ConfigError(SteerError):
    """Malformed or inconsistent run configuration."""


class InfeasibleTransport(SteerError):
    """The transport program admits no feasible point on the chain."""


class NumericalFailure(SteerError):
    """Solver terminated without a trustworthy answer.

    Carries the residuals that failed validation, when available.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = dict(residuals) if residuals else {}


class UndefinedLaw(SteerError):
    """Closed-loop mass reached a cell whose feedback row is undefined."""
