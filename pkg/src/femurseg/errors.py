"""Exception types raised across the toolkit.

Every error carries a stable ``code`` (its class name) so the HTTP service
and CLI can surface failures uniformly as ``{code, message, detail}``.
"""


class FemursegError(Exception):
    """Base class for all toolkit errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# --- generic parameter / input validation ---

class BadParam(FemursegError):
    pass


class BadDims(FemursegError):
    pass


class TooSmall(FemursegError):
    pass


class NotBinary(FemursegError):
    pass


class OutOfBounds(FemursegError):
    pass


class DimMismatch(FemursegError):
    pass


# --- DICOM ingestion ---

class MissingMagic(FemursegError):
    pass


class UnsupportedTransferSyntax(FemursegError):
    pass


class MissingTag(FemursegError):
    pass


class TruncatedFile(FemursegError):
    pass


class InconsistentGeometry(FemursegError):
    pass


class NonUniformSpacing(FemursegError):
    pass


class DuplicateLocation(FemursegError):
    pass


# --- point operations / thresholds ---

class DegenerateHistogram(FemursegError):
    pass


# --- regions / watershed ---

class NoMarkers(FemursegError):
    pass


# --- pipeline engine ---

class ParseError(FemursegError):
    pass


class UnknownOp(FemursegError):
    def __init__(self, name: str, stage: int):
        super().__init__(f"unknown operator {name!r} at stage {stage}")
        self.name = name
        self.stage = stage


class BadParamSchema(FemursegError):
    def __init__(self, stage: int, key: str, reason: str = ""):
        msg = f"bad parameter {key!r} at stage {stage}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)
        self.stage = stage
        self.key = key


class StageFailure(FemursegError):
    def __init__(self, stage: int, cause: Exception):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


# --- femur delineation ---

class EmptySlice(FemursegError):
    pass


class RangeNotFound(FemursegError):
    pass


class InvertedRange(FemursegError):
    pass


class NoBone(FemursegError):
    pass


class NoSeed(FemursegError):
    pass


class PartialFailure(FemursegError):
    def __init__(self, failed_indices):
        super().__init__(f"segmentation produced no contour on slices {sorted(failed_indices)}")
        self.failed_indices = sorted(failed_indices)


class OutOfRange(FemursegError):
    pass


# --- evaluation ---

class EmptyContour(FemursegError):
    pass


class EmptyVotes(FemursegError):
    pass


class MixedVerdictDomain(FemursegError):
    pass
