"""Exception types shared across the package."""


class IsingError(Exception):
    """Base class for package-specific errors."""


class InvalidRegionError(IsingError, ValueError):
    """Region geometry is unusable (zero side, or too small for a request)."""


class InvalidFamilyError(IsingError, ValueError):
    """A contour family is not realizable by any minus-boundary configuration."""


class CapacityError(IsingError, RuntimeError):
    """An exact method was asked to exceed its configured size cap."""


class RegimeError(IsingError, ValueError):
    """Parameters violate an inequality required for a bound or series to apply."""


class VerificationError(IsingError, AssertionError):
    """A mathematically guaranteed relation failed numerically."""
