from .errors import DimMismatchError, ExportError, ManifestError
from .export import ExportResult, export
from .manifest import ExportManifest, KeywordMedia
from .kome import write_kome

__all__ = [
    "DimMismatchError",
    "ExportError",
    "ExportManifest",
    "ExportResult",
    "KeywordMedia",
    "ManifestError",
    "export",
    "write_kome",
]
