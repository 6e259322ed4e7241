"""Exception and warning types shared across photonstat."""


class PhotonStatError(Exception):
    """Base class for photonstat errors."""


class DomainError(PhotonStatError, ValueError):
    """Argument lies outside the domain of a closed form (e.g. on a PGF pole)."""


class UndefinedCorrelationError(PhotonStatError, ZeroDivisionError):
    """A normalized correlation was requested where a marginal probability vanishes."""


class ContourConfigError(PhotonStatError, ValueError):
    """Contour radius violates the geometric-series convergence condition."""


class FormatError(PhotonStatError):
    """Malformed PTAG or CSV input.

    ``offset`` is the byte offset (PTAG) or line number (CSV) of the violation,
    when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class PrecisionWarning(RuntimeWarning):
    """Alternating-sum cancellation exceeded tolerance; a stable fallback was used."""
