"""Exception hierarchy shared across the lab."""


class LcftError(Exception):
    """Base class for all lab errors."""


class ConfigError(LcftError):
    """Invalid configuration or parameter value."""


class PreconditionError(LcftError):
    """A documented operation precondition was violated."""


class SeibergError(PreconditionError):
    """Momentum tuple violates the Seiberg bounds."""

    def __init__(self, message, kind, indices=()):
        super().__init__(message)
        self.kind = kind  # "total-charge" or "local-bound"
        self.indices = tuple(indices)


class ResolutionError(ConfigError):
    """Requested scale is below what the discretization can resolve."""


class RewriteError(LcftError):
    """A term-rewriting rule was applied to a term that does not match it."""


class EvaluationError(LcftError):
    """A term or integrand could not be evaluated numerically."""


class UnsupportedExpressionError(LcftError):
    """A symbolic operator was applied to a non-rational expression."""


class NumericalDegeneracyError(LcftError):
    """Estimator output is numerically meaningless (e.g. chaos mass underflow)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
