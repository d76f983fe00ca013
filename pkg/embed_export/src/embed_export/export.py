"""Run the frozen extractors over manifest media and write KOME files."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatchError
from .extractors import extract
from .kome import write_kome
from .manifest import ExportManifest


@dataclass
class ExportResult:
    written: dict[str, str] = field(default_factory=dict)   # modality -> path
    skipped: list[str] = field(default_factory=list)        # unreadable media

    @property
    def ok(self) -> bool:
        return not self.skipped


def export(manifest: ExportManifest) -> ExportResult:
    """Extract features per keyword and write one KOME file per modality.

    Media that exist but fail to decode are skipped and listed in the
    result; a dim mismatch from an extractor aborts the whole export.
    """
    manifest.validate()
    result = ExportResult()

    image_entries: dict[str, np.ndarray] = {}
    speech_entries: dict[str, np.ndarray] = {}
    for kw, media in manifest.keywords.items():
        vecs = []
        for path in media.images:
            try:
                vecs.append(extract("image", manifest.image_model, path,
                                    manifest.image_dim))
            except DimMismatchError:
                raise
            except Exception as e:
                result.skipped.append(f"image {path}: {e}")
        if vecs:
            image_entries[kw] = np.stack(vecs)
        if media.audio is not None:
            try:
                vec = extract("speech", manifest.speech_model, media.audio,
                              manifest.speech_dim)
                speech_entries[kw] = vec[np.newaxis, :]
            except DimMismatchError:
                raise
            except Exception as e:
                result.skipped.append(f"speech {media.audio}: {e}")

    if image_entries and manifest.image_out:
        write_kome(manifest.image_out, "image", manifest.image_dim,
                   image_entries)
        result.written["image"] = manifest.image_out
    if speech_entries and manifest.speech_out:
        write_kome(manifest.speech_out, "speech", manifest.speech_dim,
                   speech_entries)
        result.written["speech"] = manifest.speech_out
    return result
