"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid model or problem parameters (p <= 1, gamma <= 1, bad box, ...)."""


class DomainError(ValueError):
    """An argument lies outside the domain where the operation is defined."""


class ComputationError(RuntimeError):
    """A numerical procedure failed; ``best`` holds the best value reached."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConvergenceError(RuntimeError):
    """The solver hit its iteration budget.

    The best field found so far and the partial report are attached so the
    caller can inspect or reuse them.
    """

    def __init__(self, message, field=None, report=None):
        super().__init__(message)
        self.field = field
        self.report = report


class InsufficientDataError(ValueError):
    """Too few usable points for a fit."""
