"""Exception hierarchy shared by the solver, estimators and CLI."""


class StochNSEError(Exception):
    """Base class for all package errors."""


class ConfigError(StochNSEError, ValueError):
    """Invalid configuration; ``field`` names the offending key path."""

    def __init__(self, field: str, rule: str):
        self.field = field
        self.rule = rule
        super().__init__(f"{field}: {rule}" if field else rule)


class UnresolvedMode(StochNSEError, ValueError):
    pass


class BlowUp(StochNSEError, ArithmeticError):
    """A spectral coefficient left the admissible range during time stepping."""

    def __init__(self, step: int, magnitude: float):
        self.step = step
        self.magnitude = magnitude
        super().__init__(f"coefficient magnitude {magnitude:.3e} at step {step}")


class DegenerateDenominator(StochNSEError, ArithmeticError):
    pass


class ExponentOutOfRange(StochNSEError, ValueError):
    pass


class IoError(StochNSEError, OSError):
    pass
