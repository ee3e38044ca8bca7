"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument lies outside the admissible range."""


class DimensionError(ValueError):
    """Input shape or dimension does not match the object it is applied to."""


class DomainError(ValueError):
    """A point or support lies outside the domain of definition."""


class ConfigError(ValueError):
    """An experiment configuration is malformed."""


class DataError(ValueError):
    """Data cannot be used by the requested computation (e.g. nonpositive values in a log fit)."""


class BudgetError(RuntimeError):
    """An enumeration would exceed its allowed size."""


class NumericalError(RuntimeError):
    """An iterative solver failed to reach its tolerance.

    ``residual`` carries the last achieved residual (or duality gap).
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StabilityError(NumericalError):
    """A construction would divide by a (near) vanishing density."""


class TrainingError(RuntimeError):
    """Training produced non-finite values; ``state`` holds the last finite networks."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state
