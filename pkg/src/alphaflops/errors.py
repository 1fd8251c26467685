"""Exception hierarchy shared by every module in the package."""


class AlphaFlopsError(Exception):
    """Base class for all errors raised by alphaflops."""


class ShapeError(AlphaFlopsError, ValueError):
    """Invalid layer dimensions, or a kernel that does not fit the input."""


class FlopsOverflowError(AlphaFlopsError, OverflowError):
    """A FLOPs count does not fit in an unsigned 64-bit integer."""


class ParseError(AlphaFlopsError, ValueError):
    """Malformed descriptor, parameter file or mapping file.

    ``position`` is a 1-based column (descriptor text) or line number
    (parameter files), whichever the raising parser tracks.
    """

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at {position})"
        super().__init__(message)
        self.position = position


class DatasetError(AlphaFlopsError, ValueError):
    """A timing dataset failed schema or invariant checks."""

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
        self.row = row
        self.column = column


class FitError(AlphaFlopsError):
    """Calibration could not be carried out."""


class NonIdentifiableError(FitError):
    """The data cannot constrain the requested parameters."""


class TooFewRecordsError(NonIdentifiableError):
    """A regime has fewer records than the fit requires."""


class MixedDevicesError(FitError, DatasetError):
    """Records from more than one device were passed to a single fit."""


class SweepError(AlphaFlopsError, ValueError):
    """An equal-FLOPs sweep cannot be constructed."""


class SizeGuardError(AlphaFlopsError):
    """A layer is too large for instrumented (counting) execution."""


class MemoryCapError(AlphaFlopsError, MemoryError):
    """A benchmark would exceed the configured memory cap."""
