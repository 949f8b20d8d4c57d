"""Exception types shared across the package."""


class ComgreenError(Exception):
    """Base class for all comgreen errors."""


class DimensionMismatchError(ComgreenError):
    """Operands live on phase spaces of different dimension."""


class TimeDomainError(ComgreenError):
    """A time argument falls outside a coefficient's declared domain."""


class CausticError(ComgreenError):
    """The momentum-coefficient block is singular at the requested time."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class SingularTimeError(CausticError):
    """Kernel evaluation requested at (or too close to) a singular time."""


class WindowError(ComgreenError):
    """Time outside a kernel's validity window."""


class QuadratureError(ComgreenError):
    """Phase-factor quadrature failed to converge."""


class MatchingError(ComgreenError):
    """Small-time normalization matching failed (wrong branch or window)."""


class SupportError(ComgreenError):
    """Grid data does not decay at the grid edges as required."""


class ContinuationError(ComgreenError):
    """Kernel does not support evaluation at imaginary time."""


class ConvergenceError(ComgreenError):
    """An iterative estimate did not settle (e.g. spectral slope fit)."""


class ModelSyntaxError(ComgreenError):
    """Syntax error in the model expression language."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class LoweringError(ComgreenError):
    """Expression cannot be lowered to a supported operator."""


class UnsupportedDegreeError(LoweringError):
    """Polynomial degree in phase-space symbols exceeds two."""

    def __init__(self, monomial):
        super().__init__(f"unsupported monomial of degree > 2: {monomial}")
        self.monomial = monomial


class NonlinearityError(LoweringError):
    """Phase-space symbol appears inside a call or a denominator."""
