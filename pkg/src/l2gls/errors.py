"""Exception types raised across the package."""


class L2GLSError(Exception):
    """Base class for package errors."""


class InvalidSizeError(L2GLSError, ValueError):
    pass


class InvalidSpecError(L2GLSError, ValueError):
    pass


class InvalidArgumentError(L2GLSError, ValueError):
    pass


class UnsupportedFormatError(L2GLSError, ValueError):
    def __init__(self, keyword: str, value: str = ""):
        self.keyword = keyword
        self.value = value
        super().__init__(f"unsupported format: {keyword}{': ' + value if value else ''}")


class ParseError(L2GLSError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(L2GLSError, ValueError):
    def __init__(self, message: str, violations=()):
        self.violations = list(violations)
        if self.violations:
            message += ": " + "; ".join(str(v) for v in self.violations)
        super().__init__(message)


class DegenerateInstanceError(L2GLSError, ValueError):
    pass


class NodeLookupError(L2GLSError, LookupError):
    pass


class StaleMoveError(L2GLSError, RuntimeError):
    pass


class ShapeError(L2GLSError, ValueError):
    pass


class TrainingDivergedError(L2GLSError, FloatingPointError):
    pass


class SizeLimitError(L2GLSError, ValueError):
    pass
