class MiwError(Exception):
    """Base class for errors raised by the miw package."""


class SingularityError(MiwError):
    pass


class DimensionError(MiwError):
    pass


class OrderingError(MiwError):
    """Raised when 1D world positions are not strictly increasing."""


class DegenerateConfigurationError(MiwError):
    pass


class GridMismatchError(MiwError):
    pass


class UnsupportedModeError(MiwError):
    pass


class NonFiniteForceError(MiwError):
    pass


class DivergenceError(MiwError):
    """Raised when a relaxation blows up between sequences."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
