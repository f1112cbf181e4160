"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class UnsupportedError(ValueError):
    """The requested operation is not supported for this input."""


class ConfigError(ValueError):
    """Inconsistent or invalid configuration."""


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite."""
