"""Cylindrical laws, radonifying operators and stochastic integrals on truncated
sequence spaces."""

from .errors import (CriterionInapplicable, MomentError, NotIntegrableError, NotPSDError,
                     SpaceMismatchError)

__version__ = "0.1.0"
