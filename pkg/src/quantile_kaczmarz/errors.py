"""Exception hierarchy. Everything raised on purpose derives from QRKError."""


class QRKError(Exception):
    pass


class ZeroRow(QRKError, ValueError):
    def __init__(self, index):
        super().__init__(f"row {index} has (numerically) zero norm")
        self.index = index


class NoConvergence(QRKError, RuntimeError):
    pass


class DimensionMismatch(QRKError, ValueError):
    pass


class BadDimensions(QRKError, ValueError):
    pass


class EmptyQuantile(QRKError, ValueError):
    pass


class AllZeroResiduals(QRKError, ValueError):
    pass


class BetaOutOfRange(QRKError, ValueError):
    pass


class ParseError(QRKError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InvariantViolation(QRKError, ValueError):
    pass


class TooManySubsets(QRKError, ValueError):
    pass


class BadSubsetSize(QRKError, ValueError):
    pass


class ParameterDomain(QRKError, ValueError):
    pass


class MassOutOfRange(QRKError, ValueError):
    pass


class CertificateUnavailable(QRKError):
    pass


class ConfigError(QRKError, ValueError):
    pass
