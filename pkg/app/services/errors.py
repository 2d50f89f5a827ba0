class CouplingMatrixError(Exception):
    """Base class for every error raised by the coupling matrix services."""


class InvalidArgumentError(CouplingMatrixError, ValueError):
    """An argument is outside the range the computation accepts."""


class InvalidBandError(CouplingMatrixError, ValueError):
    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class PoleHitError(CouplingMatrixError, ValueError):
    """The evaluation wavenumber coincides with a pole of the series."""


class SingularShiftError(CouplingMatrixError):
    """The shifted resonator block is singular at the requested frequency."""


class SingularConversionError(CouplingMatrixError):
    """Z/z_ref + Id is not invertible."""


class EmptyInBandError(CouplingMatrixError, ValueError):
    pass


class NotPositiveDefiniteError(CouplingMatrixError):
    pass


class OutOfRangeError(CouplingMatrixError):
    pass


class PoleInsideBandError(CouplingMatrixError, ValueError):
    pass


class NotOrthogonalError(CouplingMatrixError, ValueError):
    pass


class DimensionMismatchError(CouplingMatrixError, ValueError):
    pass


class NotLosslessError(CouplingMatrixError):
    pass


class InsufficientSamplesError(CouplingMatrixError, ValueError):
    pass


class ZeroResidueError(CouplingMatrixError, ValueError):
    pass


class MaskViolationError(CouplingMatrixError, ValueError):
    pass


class ParseError(CouplingMatrixError, ValueError):
    """Malformed model or matrix document.

    ``line`` is 1-based when known; ``field`` names the offending field.
    """

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field is not None:
            location.append(f"field '{field}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")


class SweepExportError(CouplingMatrixError, OSError):
    pass


class Rank1QualityWarning(UserWarning):
    """A fitted residue is far from rank 1."""


class NegativeResidueWarning(UserWarning):
    """The dominant eigenvalue of a residue was negative and its sign was flipped."""


class NonConvergenceWarning(UserWarning):
    pass
