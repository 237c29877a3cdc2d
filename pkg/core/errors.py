"""
Exception hierarchy for the DAMC library
Every error raised on purpose by the library derives from DamcError
"""


class DamcError(Exception):
    """Base class for all library errors"""


class ConfigurationError(DamcError, ValueError):
    """Invalid configuration, config file or dimension/partition mismatch"""


class ArgumentError(DamcError, ValueError):
    """Invalid argument passed to a library operation"""


class ParseError(ConfigurationError):
    """Malformed input file (dataset or serialized artifact)"""


class UnboundedLossError(ConfigurationError):
    """A bound needs a bounded, Lipschitz loss but got an unbounded one"""


class MissingCellError(ArgumentError):
    """A grid cell required by an estimate is absent from the records"""


class NumericalError(DamcError, RuntimeError):
    """Solver or decomposition failure (non-finite values, non-convergence)"""


class DegenerateEigengapError(NumericalError):
    """The d-th eigengap of the sampling distribution is numerically zero"""


class UndefinedCorrelationError(NumericalError):
    """Correlation requested on a zero-variance series"""
