"""Exception hierarchy shared across the package."""


class DualBandError(Exception):
    """Base class for all errors raised by dualband."""


class ConfigurationError(DualBandError, ValueError):
    """Invalid parameters or mismatched shapes.

    ``key`` carries the dotted config path of the offending field when known.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class DomainError(DualBandError, ValueError):
    pass


class SizingError(DualBandError, ValueError):
    pass


class BalanceError(DualBandError, ValueError):
    pass


class TrainingError(DualBandError, ValueError):
    pass


class ParseError(DualBandError, ValueError):
    pass


class DecodeError(DualBandError, ValueError):
    pass
