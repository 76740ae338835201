"""Exception types shared across the simulator."""


class FedSelError(Exception):
    """Base class for all simulator errors."""


class InvalidArgumentError(FedSelError, ValueError):
    """An argument violates a documented precondition."""


class SchemaError(FedSelError):
    """A named column is missing from an input file."""


class ParseError(FedSelError):
    """A cell could not be parsed; message carries the row index."""


class UnsupportedLabelError(FedSelError):
    """Label column does not contain exactly two distinct values."""


class InsufficientDataError(FedSelError):
    """Too few samples for the requested estimate."""


class NumericError(FedSelError):
    """An iterative numeric procedure failed to converge."""


class BudgetExhaustedError(FedSelError):
    """Composed privacy budget left the valid (epsilon, delta) range."""


class CheckpointFormatError(FedSelError):
    """Checkpoint file has a bad magic string or unknown version."""


class CheckpointCorruptionError(FedSelError):
    """Checkpoint file failed its checksum."""


class NoClientsError(FedSelError):
    """No clients available for selection this round."""


class NoUpdatesError(FedSelError):
    """Aggregation was called with no client updates."""


class UndefinedMetricError(FedSelError):
    """Metric is undefined for the given input (e.g. single-class AUC)."""
