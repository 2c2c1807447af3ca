"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations

import numpy as np


class CoikError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(CoikError):
    """Malformed numerical input (non-finite entries, bad shapes, bad sizes)."""


class ConfigError(CoikError):
    """Invalid run configuration (maps to CLI exit code 2)."""


class RankDeficiencyError(CoikError):
    """A moment matrix is singular or too ill-conditioned to invert."""


class DegenerateLikelihoodError(CoikError):
    """The implied innovation covariance is not positive definite."""


class NormalizationError(CoikError):
    """The requested cointegration-vector normalization is not empirically valid."""


class UndefinedMeasureError(CoikError):
    """A score (modularity, masked deviation) is undefined for the given input."""


class IterationLimitError(CoikError):
    """Alternating projection did not converge; carries the last iterate."""

    def __init__(self, message: str, last_iterate: np.ndarray, residual: float):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
