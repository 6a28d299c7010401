"""Exception hierarchy shared by every dflsim module."""


class DflsimError(Exception):
    """Base class for all dflsim errors."""


class InvalidParams(DflsimError, ValueError):
    pass


class NodeOutOfRange(DflsimError, IndexError):
    pass


class ParseError(DflsimError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyInput(DflsimError, ValueError):
    pass


class DimensionMismatch(DflsimError, ValueError):
    pass


class WeightMismatch(DflsimError, ValueError):
    pass


class TooFewUpdates(DflsimError, ValueError):
    def __init__(self, message, node=None):
        self.node = node
        super().__init__(message)


class InvalidProportion(DflsimError, ValueError):
    pass


class BadMagic(DflsimError, ValueError):
    pass


class CountMismatch(DflsimError, ValueError):
    pass


class TruncatedFile(DflsimError, ValueError):
    pass


class NotEnoughData(DflsimError, ValueError):
    pass


class EmptyShard(DflsimError, ValueError):
    pass


class NoHonestNodes(DflsimError, ValueError):
    pass


class ConfigError(DflsimError, ValueError):
    """Raised for malformed, unknown or out-of-range configuration keys."""

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)
