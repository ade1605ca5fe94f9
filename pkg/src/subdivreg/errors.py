"""Exception hierarchy shared by all subdivreg modules."""


class SubdivregError(Exception):
    """Base class for every error raised by the package."""


class InvalidDilationError(SubdivregError, ValueError):
    pass


class DomainError(SubdivregError, ValueError):
    """Symbol evaluated at a point with a zero coordinate."""


class UnsupportedError(SubdivregError, ValueError):
    """Operation requested outside the scope it is defined for."""


class DegenerateMaskError(SubdivregError, ValueError):
    pass


class NormalizationRefused(SubdivregError):
    """Rescaling would alter the scheme because mu_k is not summable."""


class SupportMismatchError(SubdivregError, ValueError):
    pass


class DegenerateSubspaceError(SubdivregError, ValueError):
    pass


class PreconditionError(SubdivregError, ValueError):
    pass


class MissingLimitPointsError(SubdivregError, ValueError):
    pass


class UnknownSchemeError(SubdivregError, KeyError):
    pass


class ConfigError(SubdivregError, ValueError):
    pass


class ParseError(SubdivregError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
