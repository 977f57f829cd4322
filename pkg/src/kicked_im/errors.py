"""Exception and warning types shared across the package."""


class KickedIMError(Exception):
    """Base class for all package errors."""


class ValidationError(KickedIMError, ValueError):
    """Input violates a documented precondition (CLI exit code 2)."""


class CriticalPointError(ValidationError):
    """Parameters lie on a critical line where the requested quantity is undefined."""


class NumericalError(KickedIMError, ArithmeticError):
    """A numerical procedure failed its internal consistency check (CLI exit code 3)."""


class DegenerateAxisError(NumericalError):
    """The Bloch rotation axis is undefined because sin(phi_k) vanishes."""


class PairingError(NumericalError):
    """Eigenvalues of an orthogonal map do not form conjugate pairs."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach the requested tolerance."""


class TruncationBreakdown(NumericalError):
    """All singular values at a bond underflowed during MPS compression."""


class FiniteSizeWarning(UserWarning):
    """Result is outside the light-cone window and carries finite-size effects."""


class LeakageWarning(UserWarning):
    """Spectral window leakage exceeds the declared bound."""
