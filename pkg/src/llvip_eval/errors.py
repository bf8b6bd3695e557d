"""Exception hierarchy shared by every module.

All errors derive from :class:`EvalError` so the CLI can map them onto
exit code 1 in one place.
"""


class EvalError(Exception):
    """Base class for evaluation failures caused by bad input."""


class DecodeError(EvalError):
    pass


class InvalidDimension(EvalError, ValueError):
    pass


class CropTooLarge(EvalError):
    pass


class InvalidSigma(EvalError, ValueError):
    pass


class ChannelMismatch(EvalError):
    pass


class TooSmall(EvalError):
    pass


class DimensionMismatch(EvalError):
    pass


class ImageTooSmall(EvalError):
    pass


class EmptyDataset(EvalError):
    pass


class NoGroundTruth(EvalError):
    pass


class EmptyGroundTruth(EvalError):
    pass


class ParseError(EvalError):
    def __init__(self, message, source=None, line=None):
        self.source = source
        self.line = line
        where = ""
        if source is not None:
            where = str(source)
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class InvalidBox(ParseError):
    pass


class InvalidConfidence(ParseError):
    pass


class OutOfRange(ParseError):
    pass


class EmptySeries(EvalError):
    pass


class MissingPair(EvalError):
    pass


class MissingAnnotation(EvalError):
    pass


class MissingCandidate(EvalError):
    pass


class UnknownImage(EvalError):
    pass


class DuplicateImageId(EvalError):
    pass


class DatasetValidationError(EvalError):
    """Raised after a full scan when one or more problems were found."""

    def __init__(self, problems):
        self.problems = list(problems)
        lines = [f"{type(p).__name__}: {p}" for p in self.problems]
        super().__init__(f"{len(self.problems)} problem(s):\n" + "\n".join(lines))
