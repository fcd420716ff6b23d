"""Exception hierarchy shared by all seltrain modules."""


class SelTrainError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(SelTrainError):
    """Array shapes do not satisfy an operation's contract."""


class NumericError(SelTrainError):
    """Non-finite values where finite ones are required."""


class DataFormatError(SelTrainError):
    """A dataset file violates its documented layout."""


class ConfigError(SelTrainError):
    """A run configuration violates its invariants."""
