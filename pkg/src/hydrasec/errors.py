"""Exception hierarchy shared by all hydrasec modules."""


class HydraError(Exception):
    """Base class for every error raised by this package."""


class InvalidDimensionError(HydraError, ValueError):
    pass


class DimensionMismatchError(HydraError, ValueError):
    pass


class IndexRangeError(HydraError, IndexError):
    pass


class InvalidElementError(HydraError, ValueError):
    pass


class InvalidModulusError(HydraError, ValueError):
    pass


class NotPurelyPeriodicError(HydraError, ArithmeticError):
    pass


class NumericalFailureError(HydraError, ArithmeticError):
    pass


class CalibrationError(HydraError, ValueError):
    pass


class CorruptPacketError(HydraError, ValueError):
    pass


class StaleSequenceError(HydraError, ValueError):
    """Packet sequence number is not strictly newer than the last accepted one."""


class ConfigError(HydraError, ValueError):
    pass
