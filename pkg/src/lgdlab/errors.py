"""Exception hierarchy shared by every lgdlab module."""


class LgdLabError(Exception):
    """Base class for all errors raised by lgdlab."""


class ValidationError(LgdLabError, ValueError):
    """Input data breaks a structural rule (empty data, bad spell, schema mismatch)."""


class OrderingError(LgdLabError, ValueError):
    """Two months (or a horizon) are given in the wrong order."""


class ConfigurationError(LgdLabError, ValueError):
    """A configuration value is invalid or a required series does not cover a period."""


class LookupFailure(LgdLabError, KeyError):
    """A requested key (e.g. a reference date) does not exist."""

    def __str__(self) -> str:
        # KeyError quotes its argument; keep messages readable
        return str(self.args[0]) if self.args else ""


class JoinError(LgdLabError, KeyError):
    """Two keyed inputs do not line up."""

    def __init__(self, message: str, missing: list | None = None):
        super().__init__(message)
        self.missing = list(missing or [])

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class NumericError(LgdLabError, ArithmeticError):
    """A numeric precondition (e.g. positive denominator) is violated."""
