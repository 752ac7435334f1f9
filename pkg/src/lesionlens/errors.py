"""Exception hierarchy.

Errors split into two families so the CLI can map them onto exit codes:
``InputError`` (bad files, bad shapes, exit 2) and ``AnalysisError``
(inputs were readable but the analysis degenerated, exit 3).
"""


class LesionLensError(Exception):
    """Base class for every error raised by this package."""


class InputError(LesionLensError):
    pass


class AnalysisError(LesionLensError):
    pass


class IoError(InputError):
    """File could not be read or written."""


class FormatError(InputError):
    """Bytes do not follow the expected container layout."""


class DataError(InputError):
    """Container is well formed but the payload holds NaN/Inf."""


class ShapeMismatch(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class InvalidSimplex(InputError):
    """Sample rows are not probability vectors."""


class InvalidMask(InputError):
    """Binary raster violates a LesionMask invariant."""


class DegenerateInput(AnalysisError):
    pass


class EmptyMask(AnalysisError):
    pass
