"""Exception hierarchy shared across the package."""


class CregmmError(Exception):
    """Base class for all package-specific errors."""


# panel construction / transformation
class DuplicateKey(CregmmError):
    pass


class BadPeriod(CregmmError):
    pass


class UnknownVariable(CregmmError):
    pass


class EmptyEstimationSample(CregmmError):
    pass


class ZeroVariance(CregmmError):
    pass


# data generation
class CalibrationInfeasible(CregmmError):
    pass


class MissingLatents(CregmmError):
    pass


# estimation
class EmptySample(CregmmError):
    pass


class RankDeficient(CregmmError):
    def __init__(self, message, dropped=()):
        super().__init__(message)
        self.dropped = tuple(dropped)


class TimeInvariantInFE(CregmmError):
    pass


class NoPresampleUnits(CregmmError):
    pass


# GMM
class WindowEmpty(CregmmError):
    pass


class UnknownVariant(CregmmError):
    pass


class Underidentified(CregmmError):
    pass


class SingularWeight(CregmmError):
    pass


class InsufficientSpan(CregmmError):
    pass


class TermsNotInModel(CregmmError):
    pass


# Monte Carlo harness
class NonFactorialGrid(CregmmError):
    pass


class RawNotRetained(CregmmError):
    pass


class KeyMismatch(CregmmError):
    pass


class AllRepsFailed(CregmmError):
    pass


# IO / config
class MissingColumn(CregmmError):
    pass


class NonNumericCell(CregmmError):
    pass


class UnknownKey(CregmmError):
    pass


class MissingSection(CregmmError):
    pass


class TypeMismatch(CregmmError):
    pass


class IoFailure(CregmmError):
    pass
