"""Exception hierarchy shared by every module."""


class MdscError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(MdscError, ValueError):
    """Malformed input data or configuration (CLI exit code 1)."""


class DimensionError(ValidationError):
    pass


class ConfigurationError(ValidationError):
    pass


class NumericError(MdscError, ArithmeticError):
    """A numerical failure at runtime (CLI exit code 2)."""


class DegenerateVectorError(NumericError):
    """A vector (or matrix row) has a norm too small to normalize."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DivergenceError(NumericError):
    """Non-finite loss or gradient during training."""

    def __init__(self, message, epoch=None, term=None):
        super().__init__(message)
        self.epoch = epoch
        self.term = term


class ProbeError(NumericError):
    """Finite-difference probe hit a non-finite function value."""

    def __init__(self, message, name=None, index=None):
        super().__init__(message)
        self.name = name
        self.index = index


class UnsupportedMetricError(MdscError):
    """Metric is undefined for this model or record set."""


class SeparationInfeasibleError(NumericError):
    pass


class OracleUnavailableError(NumericError):
    pass
