"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`AwhmmError`; the ones that describe bad input also derive from
:class:`ValueError` so callers that only know about the standard library
still catch them.
"""


class AwhmmError(Exception):
    pass


class DimensionError(AwhmmError, ValueError):
    pass


class SymmetryError(AwhmmError, ValueError):
    pass


class PSDError(AwhmmError, ValueError):
    pass


class SingularCovarianceError(AwhmmError, ValueError):
    pass


class InfeasibleTransportError(AwhmmError, ValueError):
    pass


class NumericalError(AwhmmError, ArithmeticError):
    """A solver produced NaN/inf or otherwise lost numerical meaning."""


class StationaryDistributionError(AwhmmError, ValueError):
    pass


class ModelFormatError(AwhmmError, ValueError):
    """A serialized model or sequence file failed validation."""
