"""Exception types shared across the package."""


class GsquantError(Exception):
    pass


class StructuralError(GsquantError):
    """Inputs with mismatched shapes, charts or degrees."""


class DomainError(GsquantError):
    """A point or parameter outside the domain of an operation."""


class PreconditionError(GsquantError):
    """An operation was called on data that violates its precondition."""


class NumericError(GsquantError):
    """A quadrature or fit failed to reach its tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
