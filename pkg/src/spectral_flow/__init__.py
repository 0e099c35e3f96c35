"""Spectral dominance, interacting particle systems and their mean-field PDE."""
from .core import (DriftField, GridCDF, GridFunction, InteractionKernel, OrderedSpectrum,
                   UniformGrid, cdf_dominates, dominates, empirical_cdf, quantile)
from .errors import SpectralFlowError

__version__ = "0.1.0"

__all__ = [
    "DriftField", "GridCDF", "GridFunction", "InteractionKernel", "OrderedSpectrum",
    "UniformGrid", "cdf_dominates", "dominates", "empirical_cdf", "quantile",
    "SpectralFlowError", "__version__",
]
