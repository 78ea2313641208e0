"""Exception hierarchy shared by all solver modules."""


class DispersalError(Exception):
    """Base class for every error raised by the package."""


class NonConvergence(DispersalError):
    """An iteration budget ran out before the tolerance was met."""


class NegativeSolution(DispersalError):
    """A Newton iterate left the positive cone and damping could not recover."""


class NonPositive(DispersalError):
    """A time step produced a non-positive density."""


class BlowUp(DispersalError):
    """The sup-norm of a trajectory exceeded the blow-up threshold."""


class NonExistence(DispersalError):
    """The principal eigenvalue mu_1 is non-negative, so no positive steady state exists."""


class OutOfRange(DispersalError):
    """Argument outside the supported evaluation range."""


class BracketFailure(DispersalError):
    """A root bracket did not show a sign change."""


class InvalidA1(DispersalError):
    """The selection gradient a1 must be strictly positive."""


class ZeroField(DispersalError):
    """A field that must be non-trivial is identically zero."""


class GridMismatch(DispersalError):
    """Two fields live on incompatible grids."""


class InsufficientTail(DispersalError):
    """Too few resolved trait nodes in the tail fit window."""


class InsufficientData(DispersalError):
    """Too few sweep points for a scaling fit."""


class ConfigError(DispersalError):
    """An experiment configuration failed validation."""

    def __init__(self, message, path=()):
        self.path = tuple(path)
        where = "/".join(str(p) for p in self.path)
        super().__init__(f"{where}: {message}" if where else message)
