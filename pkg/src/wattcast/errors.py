"""Exception hierarchy shared by every module."""


class WattcastError(Exception):
    """Base class for all errors raised by this package."""


class InputError(WattcastError, ValueError):
    """Malformed or out-of-range input (CLI exit status 2)."""


# power
class PowerSpecError(InputError):
    pass


class NonZeroAtOrigin(PowerSpecError):
    pass


class NotIncreasing(PowerSpecError):
    pass


class NotConvex(PowerSpecError):
    pass


class EmptyTable(PowerSpecError):
    pass


class SpeedAboveCap(InputError):
    pass


class PowerAboveCapRange(InputError):
    pass


# model
class TraceSyntaxError(InputError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnknownPage(InputError):
    pass


class NonPositiveSize(InputError):
    pass


class NegativeArrival(InputError):
    pass


class ZeroWeight(InputError):
    pass


class ConfigError(InputError):
    pass


# blaps
class EmptyQueue(WattcastError):
    pass


class NoPendingEvents(WattcastError):
    pass


class SpeedCapExceeded(WattcastError):
    pass


# rounding
class InconsistentSlots(WattcastError):
    pass


class MismatchedTraces(InputError):
    pass


# analysis
class IncompleteSchedule(WattcastError):
    pass


class NotOutstanding(WattcastError):
    pass


class InfeasibleReference(WattcastError):
    pass


class BetaMismatch(InputError):
    pass


class BudgetExceeded(WattcastError):
    pass


class HorizonTooShort(WattcastError):
    pass
