"""Exception hierarchy shared by every oltae module."""


class OltaeError(Exception):
    """Base class for all package errors."""


class NumericalError(OltaeError):
    """A computation could not produce a trustworthy number."""


class SingularRotation(NumericalError):
    """Rotation by 180 degrees; the Gibbs vector is unbounded."""


class NotARotation(OltaeError):
    """Matrix is not proper orthogonal within tolerance."""


class SingularMatrix(NumericalError):
    def __init__(self, det, message=None):
        self.det = det
        super().__init__(message or f"matrix is singular (det={det!r})")


class TooFewCorrespondences(OltaeError):
    def __init__(self, n):
        self.n = n
        super().__init__(f"need at least 3 correspondences, got {n}")


class DegenerateGeometry(NumericalError):
    def __init__(self, message, condition_number=None):
        self.condition_number = condition_number
        super().__init__(message)


class DegenerateInput(NumericalError):
    pass


class DivideByZero(NumericalError):
    pass


class ProtocolViolation(OltaeError):
    pass


class InvalidConfig(OltaeError):
    pass


class ParseError(OltaeError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


class ValidationError(OltaeError):
    def __init__(self, reason, row=None):
        self.row = row
        self.reason = reason
        prefix = f"row {row}: " if row is not None else ""
        super().__init__(prefix + reason)


class LengthMismatch(OltaeError):
    pass


class IoError(OltaeError):
    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{path}: {message}")
