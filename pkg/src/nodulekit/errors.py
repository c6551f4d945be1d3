"""Exception types shared across the toolkit."""


class NodulekitError(Exception):
    """Base class for all toolkit errors."""


class FormatError(NodulekitError, ValueError):
    """A file does not conform to its expected on-disk format."""


class ValidationError(NodulekitError, ValueError):
    """An in-memory value or parameter violates a documented contract."""
