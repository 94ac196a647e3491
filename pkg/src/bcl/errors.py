"""Exception types raised across the package."""


class BclError(Exception):
    """Base class for all errors raised by :mod:`bcl`."""


class NonSymmetric(BclError, ValueError):
    pass


class NonFinite(BclError, ArithmeticError):
    pass


class DimensionMismatch(BclError, ValueError):
    pass


class NonPositiveGain(BclError, ValueError):
    pass


class NonPositiveMu(BclError, ValueError):
    pass


class InvalidBounds(BclError, ValueError):
    pass


class NonPositiveTau(BclError, ValueError):
    pass


class InvalidLevels(BclError, ValueError):
    pass


class OutOfBand(BclError, ValueError):
    pass


class DegenerateX(BclError, ValueError):
    pass


class NonPD(BclError, ValueError):
    pass


class CertificateInfeasible(BclError, ValueError):
    pass


class GainSingularity(BclError, ZeroDivisionError):
    pass


class NonPositiveRho(BclError, ValueError):
    pass


class PreconditionViolated(BclError, ValueError):
    pass


class GridMismatch(BclError, ValueError):
    pass


class ConfigError(BclError, ValueError):
    pass
