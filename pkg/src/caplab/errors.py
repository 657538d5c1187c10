"""Exception hierarchy shared by all caplab modules."""


class CapLabError(Exception):
    """Base class for every error raised by caplab."""


class ParameterError(CapLabError, ValueError):
    """A scalar parameter is outside its admissible range."""


class GeometryError(CapLabError, ValueError):
    """Input points or sets violate a geometric precondition."""


class DomainError(CapLabError, ValueError):
    """A grid domain, mask or curve is invalid for the requested operation."""


class ConfigError(CapLabError, ValueError):
    """A configuration file or override could not be interpreted."""


class SolverError(CapLabError, RuntimeError):
    """A numerical solve failed to converge.

    ``diagnostics`` carries whatever state is useful for a post mortem
    (iteration count, last energy, residual, regularization level).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
