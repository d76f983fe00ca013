"""Frozen, deterministic feature extractors.

Each extractor is a pure function of the media bytes and the target dim;
there is no trainable state, so repeated runs over unchanged media produce
identical vectors. The extractor name is recorded in the manifest so other
(heavier) pretrained backbones can be swapped in behind the same registry.
"""

from __future__ import annotations

import wave

import numpy as np
from PIL import Image

from .errors import DimMismatchError, ExportError

_IMAGE_SIDE = 32  # fixed preprocessing: RGB, bilinear resize to 32x32


def _pixel_stats(path: str, dim: int) -> np.ndarray:
    """Low-frequency spectrum of the resized grayscale image plus channel
    statistics; a stand-in for a pretrained vision backbone."""
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize((_IMAGE_SIDE, _IMAGE_SIDE),
                                        Image.Resampling.BILINEAR)
    px = np.asarray(rgb, dtype=np.float64) / 255.0
    gray = px.mean(axis=2)
    spectrum = np.abs(np.fft.rfft2(gray)).ravel()
    stats = np.concatenate([px.mean(axis=(0, 1)), px.std(axis=(0, 1))])
    feats = np.concatenate([stats, spectrum])
    if dim > feats.size:
        raise ExportError(
            f"pixel-stats-v1 yields {feats.size} features, cannot fill dim {dim}")
    v = feats[:dim]
    norm = np.linalg.norm(v)
    return (v / norm if norm > 0 else v).astype(np.float32)


def _spectral(path: str, dim: int) -> np.ndarray:
    """Banded log-magnitude spectrum of a (16-bit PCM) WAV clip, pooled over
    the whole clip; a stand-in for a pretrained speech encoder."""
    with wave.open(path, "rb") as w:
        n_channels = w.getnchannels()
        width = w.getsampwidth()
        frames = w.readframes(w.getnframes())
    if width != 2:
        raise ExportError(f"{path}: only 16-bit PCM WAV is supported")
    samples = np.frombuffer(frames, dtype="<i2").astype(np.float64) / 32768.0
    if samples.size == 0:
        raise ExportError(f"{path}: empty audio clip")
    if n_channels > 1:
        samples = samples.reshape(-1, n_channels).mean(axis=1)
    mag = np.abs(np.fft.rfft(samples))
    if dim > mag.size:
        raise ExportError(
            f"spectral-v1 yields {mag.size} bins, cannot fill dim {dim}")
    bands = np.array_split(mag, dim)
    v = np.log1p(np.array([b.mean() for b in bands]))
    norm = np.linalg.norm(v)
    return (v / norm if norm > 0 else v).astype(np.float32)


IMAGE_EXTRACTORS = {"pixel-stats-v1": _pixel_stats}
SPEECH_EXTRACTORS = {"spectral-v1": _spectral}


def get_extractor(modality: str, model: str):
    registry = IMAGE_EXTRACTORS if modality == "image" else SPEECH_EXTRACTORS
    if model not in registry:
        raise ExportError(
            f"unknown {modality} model {model!r}; known: {sorted(registry)}")
    return registry[model]


def extract(modality: str, model: str, path: str, dim: int) -> np.ndarray:
    vec = get_extractor(modality, model)(path, dim)
    if vec.shape != (dim,):
        raise DimMismatchError(
            f"{model} produced shape {vec.shape} for {path}, expected ({dim},)")
    return vec
