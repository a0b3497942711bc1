"""Exception hierarchy shared by every module."""


class LifetimePDError(Exception):
    """Base class; the CLI maps any subclass to exit status 1."""

    category = "error"


class ValidationError(LifetimePDError, ValueError):
    category = "validation"


class DimensionMismatch(ValidationError):
    category = "dimension"


class LengthMismatch(ValidationError):
    category = "length"


class EmptyCohortRow(ValidationError):
    category = "cohort"

    def __init__(self, row: int):
        super().__init__(f"migration counts row {row} sums to zero")
        self.row = row


class NonAbsorbingDefault(ValidationError):
    category = "cohort"


class OverflowGuard(LifetimePDError, ArithmeticError):
    """Overlay exponent out of range, or a row whose mass underflowed to zero."""

    category = "overflow"


class SingularInnovation(LifetimePDError, ArithmeticError):
    category = "filter"


class NoConvergence(LifetimePDError, ArithmeticError):
    category = "riccati"

    def __init__(self, max_iter: int, last_change: float):
        super().__init__(
            f"Riccati iteration did not converge in {max_iter} iterations "
            f"(last change {last_change:.3e}); check detectability"
        )
        self.max_iter = max_iter
        self.last_change = last_change


class ConfigError(LifetimePDError):
    """Bad run configuration. ``where`` names the offending field or line."""

    category = "config"

    def __init__(self, message: str, where: str | None = None):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where
