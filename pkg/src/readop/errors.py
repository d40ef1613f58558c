"""Exception hierarchy shared by every module."""


class ReadOpError(Exception):
    """Base class for all package errors."""


class InvalidParams(ReadOpError):
    pass


class GrowthOverflow(ReadOpError):
    pass


class OutOfHorizon(ReadOpError):
    pass


class NotInDomain(ReadOpError):
    pass


class NotLayOff(ReadOpError):
    pass


class NetNotFixed(ReadOpError):
    pass


class BudgetExceeded(ReadOpError):
    """Raised by the S+K split when the nuclear sum reaches the budget.

    The computed decomposition is attached so callers can still report it.
    """

    def __init__(self, message: str, decomposition=None):
        super().__init__(message)
        self.decomposition = decomposition


class DomainExceeded(ReadOpError):
    pass


class HorizonExceeded(ReadOpError):
    pass


class StepNotBuilt(ReadOpError):
    pass


class NetTooLarge(ReadOpError):
    pass


class ZeroLeading(ReadOpError):
    pass


class NoLargeCoordinate(ReadOpError):
    pass


class NetMiss(ReadOpError):
    pass


class OrderingFails(ReadOpError):
    pass


class Eq5Exceeded(ReadOpError):
    def __init__(self, message: str, factorization=None):
        super().__init__(message)
        self.factorization = factorization


class ParseError(ReadOpError):
    pass
