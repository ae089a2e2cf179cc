"""Exception types raised across pclab."""


class PclabError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(PclabError, ValueError):
    """Operand shapes are incompatible."""


class DegenerateInputError(PclabError, ValueError):
    """Input too close to zero to normalize."""


class DomainError(PclabError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ContractError(PclabError, ValueError):
    """A documented precondition was violated."""


class ConfigError(PclabError, ValueError):
    """Invalid configuration value."""


class CheckpointError(PclabError):
    """A checkpoint could not be read back.

    ``reason`` is a short machine-readable tag (``"parse"``, ``"schema"``,
    ``"shape"``, ``"missing"``) so callers can branch without string matching.
    """

    def __init__(self, reason: str, message: str):
        super().__init__(f"[{reason}] {message}")
        self.reason = reason
        self.message = message
