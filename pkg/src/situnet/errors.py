"""Exception types shared across the package."""


class SituError(Exception):
    """Base class for all package errors."""


class DimensionError(SituError, ValueError):
    pass


class ContractError(SituError, ValueError):
    """A precondition of an operation was violated."""


class NumericError(SituError, FloatingPointError):
    pass


class DatasetError(SituError, ValueError):
    """Dataset file or ontology failed validation."""


class ConfigError(SituError, ValueError):
    pass


class OracleError(SituError, ValueError):
    """The finite-difference oracle hit a non-finite function value."""
