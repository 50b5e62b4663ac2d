"""Exception hierarchy.

Everything a caller can reasonably recover from (bad files, degenerate
geometry, too few sweeps) derives from :class:`DataError`; the CLI maps
those to exit code 2.
"""


class OspError(Exception):
    """Base class for all errors raised by this package."""


class DataError(OspError):
    """Input data is missing, malformed or unusable."""


# -- frame_stream_io ---------------------------------------------------------

class MissingFile(DataError, FileNotFoundError):
    pass


class MalformedRow(DataError):
    def __init__(self, line: int, detail: str = ""):
        self.line = line
        super().__init__(f"malformed row at line {line}" + (f": {detail}" if detail else ""))


class NonContiguousIndex(DataError):
    def __init__(self, line: int, expected: int, found: int):
        self.line = line
        super().__init__(f"line {line}: expected frame {expected}, found {found}")


class UnnormalizedProbabilities(DataError):
    def __init__(self, line: int, total: float):
        self.line = line
        self.total = total
        super().__init__(f"line {line}: probabilities sum to {total!r}")


class MalformedFile(DataError):
    """A JSON or config file could not be parsed or failed validation."""


class NotPGM(DataError):
    pass


class TooSmall(DataError):
    pass


class OrphanMask(DataError):
    def __init__(self, frame_index: int):
        self.frame_index = frame_index
        super().__init__(f"mask for frame {frame_index} has no matching frame")


class IoFailure(DataError, OSError):
    pass


# -- sweep_segmentation ------------------------------------------------------

class EvenWindow(DataError, ValueError):
    pass


class InsufficientSweeps(DataError):
    def __init__(self, found: int):
        self.found = found
        super().__init__(f"found {found} qualifying sweeps, need 6")


class EmptyRange(DataError, ValueError):
    pass


# -- random_forest -----------------------------------------------------------

class EmptyCounts(DataError, ValueError):
    pass


class DimensionMismatch(DataError, ValueError):
    pass


# -- head_biometry -----------------------------------------------------------

class EmptyMask(DataError):
    pass


class DegenerateInput(DataError):
    pass


class NotAnEllipse(DataError):
    pass


class EmptyList(DataError, ValueError):
    pass


class NonPositiveHC(DataError, ValueError):
    pass


class OutOfCurveRange(DataError, ValueError):
    pass


# -- evaluation --------------------------------------------------------------

class TooFewSamples(DataError, ValueError):
    pass


class LengthMismatch(DataError, ValueError):
    pass


class MissingTruth(DataError):
    pass
