"""Exception hierarchy shared by every module."""


class PoseliftError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(PoseliftError, ValueError):
    pass


class ShapeMismatch(PoseliftError, ValueError):
    pass


class DegenerateCoordinate(PoseliftError, ValueError):
    pass


class DegenerateConfiguration(PoseliftError, ValueError):
    pass


class NonPositiveDepth(PoseliftError, ValueError):
    pass


class NonPositiveVariance(PoseliftError, ValueError):
    pass


class InvalidCode(PoseliftError, ValueError):
    pass


class EmptyList(PoseliftError, ValueError):
    pass


class EmptyDataset(PoseliftError, ValueError):
    pass


class TooFewSamples(PoseliftError, ValueError):
    pass


class BackwardBeforeForward(PoseliftError, RuntimeError):
    pass


class ParseError(PoseliftError, ValueError):
    """Malformed text file. ``lineno`` is 1-based."""

    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"line {lineno}: "
        elif where:
            where += " "
        super().__init__(where + message)
