"""Exception types shared across the package."""


class FdranError(Exception):
    """Base class for all package errors."""


class RankDeficient(FdranError):
    pass


class DimensionMismatch(FdranError):
    pass


class LayerMismatch(FdranError):
    pass


class EmptyInput(FdranError):
    pass


class OutOfGrid(FdranError):
    pass


class FormatError(FdranError):
    """Raised when a binary file (map or channel tensor) cannot be decoded."""


class FairnessInfeasible(FdranError):
    """The eta_min floor needs more subcarriers than are available."""

    def __init__(self, required, available):
        super().__init__(f"fairness floor needs {required} subcarriers, only {available} available")
        self.required = required
        self.available = available


class IncompleteRateMap(FdranError):
    pass


class BadBounds(FdranError):
    pass


class CapacityExceeded(FdranError):
    pass


class PumpFailed(FdranError):
    pass


class ConfigError(FdranError):
    pass
