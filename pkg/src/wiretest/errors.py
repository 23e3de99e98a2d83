"""Exception hierarchy shared by every wiretest module."""


class WireTestError(Exception):
    """Base class for all errors raised by wiretest."""


class DomainError(WireTestError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class InconsistentMeasurementError(DomainError):
    """A measured output tension exceeds its input tension."""


class ContractError(WireTestError, ValueError):
    """A caller broke a precondition (shape mismatch, bad step size, ...)."""


class NotFoundError(WireTestError, KeyError):
    """A named wire, index or table entry does not exist."""

    def __str__(self) -> str:
        # KeyError quotes its argument; keep messages readable
        return str(self.args[0]) if self.args else ""


class NumericalError(WireTestError, ArithmeticError):
    """A numerical routine failed (e.g. a factorization of an indefinite matrix)."""


class NumericalInstabilityError(NumericalError):
    """Time integration diverged."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (first bad sample at t={time:.6f} s)")
        self.time = time


class InsufficientDataError(WireTestError, ValueError):
    """Not enough samples to estimate a quantity."""


class ConfigError(WireTestError, ValueError):
    """A configuration file is malformed. ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key
