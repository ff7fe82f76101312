"""Exception types shared across the package."""


class SpaceMismatchError(ValueError):
    """Vectors or operators live in incompatible spaces."""


class NotPSDError(ValueError):
    """A covariance matrix is not symmetric positive semi-definite."""


class MomentError(ValueError):
    """A requested moment does not exist for the law."""


class CriterionInapplicable(ValueError):
    """The hypotheses of a radonifying criterion are not met."""


class NotIntegrableError(RuntimeError):
    """The integrand failed the integrability conditions."""
