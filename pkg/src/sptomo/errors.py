"""Exception hierarchy for sptomo."""


class SptomoError(Exception):
    """Base class for all sptomo errors."""


class ShapeMismatchError(SptomoError):
    """Array shapes disagree with the scan geometry or with each other."""


class NearZeroDenominatorError(SptomoError):
    """A division would amplify noise past the safe threshold."""


class GridTooLargeError(SptomoError):
    """Reference-oracle routines refuse grids above their size cap."""


class CorruptCacheError(SptomoError):
    """A cache file exists but fails validation (magic, digest, lengths)."""


class FileFormatError(SptomoError):
    """A volume file is truncated or has an unrecognized header."""


class InvalidFlatFieldError(SptomoError):
    """Flat-field intensities must be strictly positive."""


class DivergenceError(SptomoError):
    """An iterative solve grew its residual far past the best value seen."""


class NonFiniteError(SptomoError):
    """An iterate contains NaN or Inf."""


class WorkerFailureError(SptomoError):
    """A pipeline worker raised; carries the slice range and the cause."""

    def __init__(self, slice_range, cause):
        self.slice_range = tuple(slice_range)
        self.cause = cause
        super().__init__(f"worker failed on slices {self.slice_range}: {cause!r}")
