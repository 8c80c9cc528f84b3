"""Exception hierarchy shared by every module."""


class DiarAsrError(ValueError):
    """Base class for validation and scoring failures."""


class MalformedLine(DiarAsrError):
    def __init__(self, line_no, reason="malformed line"):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {reason}")


class NonPositiveDuration(DiarAsrError):
    def __init__(self, line_no):
        self.line_no = line_no
        super().__init__(f"line {line_no}: duration must be positive")


class EmptyReference(DiarAsrError):
    pass


class RecordingMismatch(DiarAsrError):
    pass


class EmptyInput(DiarAsrError):
    pass


class EmptyAnnotation(DiarAsrError):
    pass


class ZeroVector(DiarAsrError):
    pass


class LengthMismatch(DiarAsrError):
    pass


class RateMismatch(DiarAsrError):
    pass


class NonSquareMatrix(DiarAsrError):
    pass


class DegenerateClasses(DiarAsrError):
    pass


class EmptyInit(DiarAsrError):
    pass


class NumericalFailure(DiarAsrError):
    pass


class UnsupportedFormat(DiarAsrError):
    pass


class CorruptHeader(DiarAsrError):
    pass


class InvalidStep(DiarAsrError):
    pass


class TooShort(DiarAsrError):
    pass


class PartialCerVector(DiarAsrError):
    pass


class GridMismatch(DiarAsrError):
    pass


class OracleFailure(DiarAsrError):
    """An external ASR call failed; ``candidate`` names the grid cell or utterance."""

    def __init__(self, candidate, reason=""):
        self.candidate = candidate
        self.reason = reason
        super().__init__(f"ASR oracle failed for {candidate!r}: {reason}")
