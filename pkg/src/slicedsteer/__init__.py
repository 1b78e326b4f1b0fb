"""Ensemble steering with sliced optimal transport feedback."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigurationError,
    DomainError,
    ExtrapolationError,
    HorizonError,
    IntegrationError,
)
from .gaussian_steering import SteeringProblem, benchmark_problem  # noqa: E402
from .sliced_core import (  # noqa: E402
    DirectionSet,
    Empirical,
    GaussianLaw,
    GaussianParams,
    ParticleEnsemble,
    sample_directions,
    sw2,
)

__all__ = [
    "ConfigurationError",
    "DirectionSet",
    "DomainError",
    "Empirical",
    "ExtrapolationError",
    "GaussianLaw",
    "GaussianParams",
    "HorizonError",
    "IntegrationError",
    "ParticleEnsemble",
    "SteeringProblem",
    "benchmark_problem",
    "sample_directions",
    "sw2",
]
