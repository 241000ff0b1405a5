"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class IntegrationError(RuntimeError):
    """Time stepping failed; carries the last good state when available."""

    def __init__(self, message, last_state=None, last_time=None):
        super().__init__(message)
        self.last_state = last_state
        self.last_time = last_time


class StagnationProximityError(RuntimeError):
    """A transverse arc came too close to a zero of the velocity field."""


class ChartOverlapError(RuntimeError):
    """Streamline chart failed its injectivity certificate."""

    def __init__(self, message, pairs=None):
        super().__init__(message)
        self.pairs = pairs or []


class PreconditionError(ValueError):
    """A chart or sweep precondition (period bound, hyperbolicity) failed."""


class SymmetrizationError(RuntimeError):
    """Mean-matching partner could not be placed disjointly."""


class CertificateError(RuntimeError):
    """A residual was requested on a field with an invalid tail certificate."""


class AliasingError(RuntimeError):
    """Grid re-expansion lost too much mass beyond the dealiasing cutoff."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class EigensolverError(RuntimeError):
    """Dense eigensolve failed or was requested above the size ceiling."""
