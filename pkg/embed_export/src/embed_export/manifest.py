"""Export manifest: which media belong to which keyword, and how to encode.

Limits: at most 4 images and exactly 1 audio clip per keyword. Every listed
media file must exist and be readable before export starts.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .errors import ManifestError
from .extractors import get_extractor

MAX_IMAGES_PER_KEYWORD = 4


@dataclass
class KeywordMedia:
    images: list[str] = field(default_factory=list)
    audio: str | None = None


@dataclass
class ExportManifest:
    keywords: dict[str, KeywordMedia]
    image_model: str = "pixel-stats-v1"
    speech_model: str = "spectral-v1"
    image_dim: int = 64
    speech_dim: int = 64
    image_out: str | None = None
    speech_out: str | None = None
    preprocessing: dict = field(default_factory=dict)

    def validate(self) -> None:
        if not self.keywords:
            raise ManifestError("manifest lists no keywords")
        wants_images = any(m.images for m in self.keywords.values())
        wants_audio = any(m.audio for m in self.keywords.values())
        if wants_images and not self.image_out:
            raise ManifestError("keywords list images but image_out is unset")
        if wants_audio and not self.speech_out:
            raise ManifestError("keywords list audio but speech_out is unset")
        if not wants_images and not wants_audio:
            raise ManifestError("no keyword lists any media")
        if wants_images:
            get_extractor("image", self.image_model)
            if self.image_dim <= 0:
                raise ManifestError("image_dim must be positive")
        if wants_audio:
            get_extractor("speech", self.speech_model)
            if self.speech_dim <= 0:
                raise ManifestError("speech_dim must be positive")
        missing = []
        for kw, media in self.keywords.items():
            if len(media.images) > MAX_IMAGES_PER_KEYWORD:
                raise ManifestError(
                    f"keyword {kw!r} lists {len(media.images)} images, "
                    f"max {MAX_IMAGES_PER_KEYWORD}")
            paths = list(media.images)
            if media.audio is not None:
                paths.append(media.audio)
            for p in paths:
                if not (os.path.isfile(p) and os.access(p, os.R_OK)):
                    missing.append(f"{kw}: {p}")
        if missing:
            raise ManifestError("missing or unreadable media files: "
                                + "; ".join(sorted(missing)))

    @classmethod
    def from_json(cls, obj: dict) -> "ExportManifest":
        known = {"keywords", "image_model", "speech_model", "image_dim",
                 "speech_dim", "image_out", "speech_out", "preprocessing"}
        unknown = set(obj) - known
        if unknown:
            raise ManifestError(f"unknown manifest keys: {sorted(unknown)}")
        if "keywords" not in obj or not isinstance(obj["keywords"], dict):
            raise ManifestError("manifest needs a 'keywords' object")
        keywords = {}
        for kw, media in obj["keywords"].items():
            if not isinstance(media, dict):
                raise ManifestError(f"keyword {kw!r}: expected an object")
            extra = set(media) - {"images", "audio"}
            if extra:
                raise ManifestError(
                    f"keyword {kw!r}: unknown media keys {sorted(extra)}")
            audio = media.get("audio")
            if isinstance(audio, list):
                raise ManifestError(
                    f"keyword {kw!r}: exactly one audio clip is allowed")
            keywords[kw] = KeywordMedia(
                images=[str(p) for p in media.get("images", [])],
                audio=None if audio is None else str(audio))
        return cls(
            keywords=keywords,
            image_model=str(obj.get("image_model", "pixel-stats-v1")),
            speech_model=str(obj.get("speech_model", "spectral-v1")),
            image_dim=int(obj.get("image_dim", 64)),
            speech_dim=int(obj.get("speech_dim", 64)),
            image_out=obj.get("image_out"),
            speech_out=obj.get("speech_out"),
            preprocessing=dict(obj.get("preprocessing", {})),
        )

    @classmethod
    def load(cls, path) -> "ExportManifest":
        try:
            with open(path, "r", encoding="utf-8") as f:
                obj = json.load(f)
        except json.JSONDecodeError as e:
            raise ManifestError(f"{path}: invalid JSON: {e}") from e
        return cls.from_json(obj)
