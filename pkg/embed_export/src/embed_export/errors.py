class ExportError(Exception):
    """Base class for export failures."""


class ManifestError(ExportError):
    """Invalid or inconsistent export manifest."""


class DimMismatchError(ExportError):
    """An extractor produced a vector that differs from the manifest dim."""
