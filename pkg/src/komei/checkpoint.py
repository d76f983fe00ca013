"""Binary checkpoints: named float64 tensors plus a JSON manifest.

Layout (little-endian): magic "KOMC" | version u32=1 | manifest_len u32
| UTF-8 JSON manifest | tensor payloads in manifest order.
The manifest carries names/shapes/offsets, the full training config, its
hash, the category list, and the text vocabulary.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import FormatError, TruncatedFileError
from .model import KomeiModel, TrainConfig

MAGIC = b"KOMC"
VERSION = 1


def save_checkpoint(model: KomeiModel, path) -> None:
    tensors = model.named_tensors()
    names = sorted(tensors)
    offset = 0
    entries = []
    for name in names:
        arr = tensors[name]
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    manifest = {
        "tensors": entries,
        "config": model.config.to_dict(),
        "config_hash": model.config.config_hash(),
        "categories": model.categories,
        "text_vocab": model.text.vocab if model.text is not None else None,
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(blob)))
        f.write(blob)
        for name in names:
            f.write(tensors[name].astype("<f8").tobytes())


def load_checkpoint(path) -> KomeiModel:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic {blob[:4]!r}")
    if len(blob) < 12:
        raise TruncatedFileError(f"{path}: truncated header", len(blob))
    version, mlen = struct.unpack("<II", blob[4:12])
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    if len(blob) < 12 + mlen:
        raise TruncatedFileError(f"{path}: truncated manifest", len(blob))
    manifest = json.loads(blob[12:12 + mlen].decode("utf-8"))
    config = TrainConfig.from_dict(manifest["config"])
    if config.config_hash() != manifest["config_hash"]:
        raise FormatError(f"{path}: manifest config hash mismatch")
    model = KomeiModel(config, manifest["categories"],
                       _allow_no_text=not config.use_text)
    if model.text is not None:
        vocab = manifest["text_vocab"]
        # rebuild the embedding to the stored vocabulary size
        model.text.vocab = vocab
        d_t = config.d_t
        from .numerics import Parameter, Tensor2
        model.text.embedding = Parameter(
            Tensor2(np.zeros((len(vocab), d_t))), name="text.embedding")
    base = 12 + mlen
    tensors = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) * 8
        lo = base + entry["offset"]
        if lo + size > len(blob):
            raise TruncatedFileError(f"{path}: truncated tensor {entry['name']}", lo)
        tensors[entry["name"]] = np.frombuffer(
            blob[lo:lo + size], dtype="<f8").reshape(shape)
    model.load_named_tensors(tensors)
    return model
