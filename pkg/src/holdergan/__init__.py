"""ReLU GAN approximation and rate checks for Hölder densities on the unit cube."""

from . import approximator, bounds, gan_train, harness, holder, ipm, relu_net, transport
from .errors import (
    BudgetError,
    ConfigError,
    DataError,
    DimensionError,
    DomainError,
    NumericalError,
    ParameterError,
    StabilityError,
    TrainingError,
)

__version__ = "0.1.0"

__all__ = [
    "approximator",
    "bounds",
    "gan_train",
    "harness",
    "holder",
    "ipm",
    "relu_net",
    "transport",
    "BudgetError",
    "ConfigError",
    "DataError",
    "DimensionError",
    "DomainError",
    "NumericalError",
    "ParameterError",
    "StabilityError",
    "TrainingError",
]
