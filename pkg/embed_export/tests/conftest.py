import wave

import numpy as np
import pytest
from PIL import Image


def make_png(path, seed, size=(40, 30)):
    rng = np.random.default_rng(seed)
    px = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
    Image.fromarray(px, "RGB").save(path)
    return str(path)


def make_wav(path, seed, n_samples=2000, rate=8000):
    rng = np.random.default_rng(seed)
    t = np.arange(n_samples) / rate
    freq = 200 + 50 * (seed % 7)
    signal = 0.5 * np.sin(2 * np.pi * freq * t) + 0.1 * rng.standard_normal(n_samples)
    pcm = (np.clip(signal, -1, 1) * 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(pcm.tobytes())
    return str(path)


@pytest.fixture
def media_dir(tmp_path):
    """Three keywords: 4, 2, and 1 images; one audio clip each."""
    media = {}
    for i, kw in enumerate(("ice", "nine", "snow")):
        n_images = {0: 4, 1: 2, 2: 1}[i]
        media[kw] = {
            "images": [make_png(tmp_path / f"{kw}-{j}.png", seed=10 * i + j)
                       for j in range(n_images)],
            "audio": make_wav(tmp_path / f"{kw}.wav", seed=i),
        }
    return tmp_path, media
