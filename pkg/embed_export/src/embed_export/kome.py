"""Writer for the KOME keyword-embedding binary format.

Layout (little-endian):
  magic "KOME" | version u32=1 | modality u8 (1=image, 2=speech)
  | dim u32 | entry_count u32
  | per entry: key_len u16, UTF-8 key, vec_count u16, vec_count*dim float32

Kept independent of any consumer so the format itself is the only contract
shared across the pipeline boundary.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .errors import ExportError

MAGIC = b"KOME"
VERSION = 1
MODALITY_CODES = {"image": 1, "speech": 2}


def write_kome(path, modality: str, dim: int,
               entries: dict[str, np.ndarray]) -> None:
    """Atomically write keyword -> (vec_count, dim) float arrays."""
    if modality not in MODALITY_CODES:
        raise ExportError(f"unknown modality {modality!r}")
    for key, vecs in entries.items():
        if vecs.ndim != 2 or vecs.shape[1] != dim:
            raise ExportError(
                f"entry {key!r}: shape {vecs.shape} does not match dim {dim}")
        if vecs.shape[0] == 0:
            raise ExportError(f"entry {key!r} has no vectors")

    payload = bytearray()
    payload += MAGIC
    payload += struct.pack("<IBII", VERSION, MODALITY_CODES[modality], dim,
                           len(entries))
    for key, vecs in entries.items():
        kb = key.encode("utf-8")
        payload += struct.pack("<H", len(kb))
        payload += kb
        payload += struct.pack("<H", vecs.shape[0])
        payload += np.ascontiguousarray(vecs, dtype="<f4").tobytes()

    out_dir = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".kome.tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(bytes(payload))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
