"""Exception hierarchy shared by all modules."""


class SpectralFlowError(Exception):
    """Base class for every error raised by the package."""


class CollisionError(SpectralFlowError):
    """Two particle positions coincide where a strict order is required."""


class DomainError(SpectralFlowError):
    """An argument lies outside the domain of an operation."""


class CoverageError(SpectralFlowError):
    """A grid does not cover the data it is asked to represent."""


class GridMismatchError(SpectralFlowError):
    """Two grid functions live on different grids."""


class MassMismatchError(SpectralFlowError):
    """Two measures have different total mass."""


class ContractError(SpectralFlowError):
    """A kernel or drift fails one of its sampled regularity conditions."""


class StiffnessError(SpectralFlowError):
    """Time step underflow in an adaptive integrator."""

    def __init__(self, message, pair=None, time=None):
        super().__init__(message)
        self.pair = pair
        self.time = time


class NumericalError(SpectralFlowError):
    """A linear-algebra or quadrature routine failed."""


class ConfigError(SpectralFlowError):
    """An experiment configuration is malformed or inconsistent."""
