"""Exception types shared across the toolkit."""


class VeracityError(Exception):
    """Base class for all toolkit errors."""


class DataError(VeracityError):
    """Malformed or inconsistent input data (manifest, descriptor file, audio, ...)."""


class LeakageError(VeracityError):
    """A learned object saw videos from its own test fold; the run must abort."""
