"""Exception types shared across the toolkit."""


class HiersegError(Exception):
    """Base class for all toolkit errors."""


class MalformedHeaderError(HiersegError):
    """Feature file header is missing, corrupt, or carries invalid values."""


class DimensionMismatchError(HiersegError):
    """Array or mask shapes disagree with declared dimensions."""


class NonFiniteValueError(HiersegError):
    """Input contains NaN or infinite values."""


class ZeroVectorError(HiersegError):
    """Cosine similarity requested for a zero-norm vector."""


class CyclicCoverageError(HiersegError):
    """Coverage parent relation would form a cycle."""


class IterOutOfRangeError(HiersegError):
    """Schedule queried outside [0, total_iters]."""


class LengthMismatchError(HiersegError):
    """Parameter vectors have different lengths."""


class EmptyMasksError(HiersegError):
    """IoU of two empty masks is undefined."""


class ParseError(HiersegError):
    """An input file failed to parse; message carries file and offset."""


class ConfigError(HiersegError):
    """Pipeline configuration file contains unknown or invalid keys."""
