"""Exception types shared across the package."""


class LayerlensError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(LayerlensError, ValueError):
    """Invalid input: bad shapes, out-of-range values, broken invariants."""


class FormatError(ValidationError):
    """Malformed on-disk artifact: tensor container, manifest, or report document."""


class UsageError(ValidationError):
    """Bad command-line invocation."""


class NumericalError(LayerlensError, ArithmeticError):
    """Numerical failure: training divergence or an internal consistency violation."""
