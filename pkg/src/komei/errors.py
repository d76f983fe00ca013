"""Exception types shared across the package."""


class KomeiError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(KomeiError):
    """Tensor shapes do not conform for the requested operation."""


class EmptyEvidenceError(KomeiError):
    """An operation that needs at least one evidence row received none."""


class FormatError(KomeiError):
    """A file does not follow its declared binary/text format."""


class TruncatedFileError(FormatError):
    """A binary file ended mid-record."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class ConfigError(KomeiError):
    """Invalid or inconsistent configuration."""


class CorpusError(KomeiError):
    """Malformed corpus content or empty corpus where samples are required."""


class DataError(KomeiError):
    """Runtime data inconsistency (e.g. unresolvable media keys)."""
