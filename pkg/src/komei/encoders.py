"""Per-modality feature streams.

Text is a small trainable embedding-bag + MLP producing a d_g vector.
Image and speech evidence are frozen vectors loaded from KOME files (or
generated deterministically by toy_encode) and projected into d_g through
trainable ReLU layers.

KOME file layout (little-endian):
  magic "KOME" | version u32=1 | modality u8 (1=image, 2=speech)
  | dim u32 | entry_count u32
  | entries: key_len u16, UTF-8 key, vec_count u16, vec_count*dim float32
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, EmptyEvidenceError, FormatError, TruncatedFileError
from .numerics import Parameter, Tensor2, const, embedding_mean, linear, relu

MAGIC = b"KOME"
VERSION = 1
_MODALITY_CODES = {"image": 1, "speech": 2}
_MODALITY_NAMES = {v: k for k, v in _MODALITY_CODES.items()}

UNK = "[UNK]"
MASK = "[MASK]"


@dataclass
class EmbeddingTable:
    """Frozen per-keyword evidence vectors for one modality."""

    modality: str
    dim: int
    entries: dict[str, np.ndarray]  # key -> (vec_count, dim) float64

    def __post_init__(self):
        if self.modality not in _MODALITY_CODES:
            raise ConfigError(f"unknown modality {self.modality!r}")
        for key, vecs in self.entries.items():
            if vecs.ndim != 2 or vecs.shape[1] != self.dim:
                raise FormatError(
                    f"entry {key!r}: vectors have shape {vecs.shape}, dim {self.dim} expected")
            if vecs.shape[0] == 0:
                raise FormatError(f"entry {key!r} has no vectors")


def write_embedding_table(table: EmbeddingTable, path) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IBII", VERSION, _MODALITY_CODES[table.modality],
                            table.dim, len(table.entries)))
        for key, vecs in table.entries.items():
            kb = key.encode("utf-8")
            f.write(struct.pack("<H", len(kb)))
            f.write(kb)
            f.write(struct.pack("<H", vecs.shape[0]))
            f.write(vecs.astype("<f4").tobytes())


def load_embedding_table(path) -> EmbeddingTable:
    with open(path, "rb") as f:
        blob = f.read()

    def take(n: int, offset: int, what: str) -> tuple[bytes, int]:
        if offset + n > len(blob):
            raise TruncatedFileError(f"{path}: truncated while reading {what}", offset)
        return blob[offset:offset + n], offset + n

    chunk, off = take(4, 0, "magic")
    if chunk != MAGIC:
        raise FormatError(f"{path}: bad magic {chunk!r}, expected {MAGIC!r}")
    chunk, off = take(13, off, "header")
    version, modality_code, dim, entry_count = struct.unpack("<IBII", chunk)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if modality_code not in _MODALITY_NAMES:
        raise FormatError(f"{path}: unknown modality code {modality_code}")
    entries: dict[str, np.ndarray] = {}
    for _ in range(entry_count):
        chunk, off = take(2, off, "key length")
        (key_len,) = struct.unpack("<H", chunk)
        chunk, off = take(key_len, off, "key")
        key = chunk.decode("utf-8")
        if key in entries:
            raise FormatError(f"{path}: duplicate key {key!r}")
        chunk, off = take(2, off, "vector count")
        (vec_count,) = struct.unpack("<H", chunk)
        if vec_count == 0:
            raise FormatError(f"{path}: entry {key!r} has zero vectors")
        chunk, off = take(vec_count * dim * 4, off, f"vectors of {key!r}")
        vecs = np.frombuffer(chunk, dtype="<f4").reshape(vec_count, dim)
        entries[key] = vecs.astype(np.float64)  # widen 32 -> 64 bit
    if off != len(blob):
        raise FormatError(f"{path}: {len(blob) - off} trailing bytes after entries")
    return EmbeddingTable(modality=_MODALITY_NAMES[modality_code], dim=dim,
                          entries=entries)


def toy_encode(surface: str, modality: str, dim: int, seed: int,
               count: int = 1) -> list[np.ndarray]:
    """Deterministic pseudo-random unit vectors keyed by (surface, modality)."""
    out = []
    for i in range(count):
        digest = hashlib.sha256(
            f"{surface}|{modality}|{i}|{seed}".encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        v = rng.standard_normal(dim)
        out.append(v / np.linalg.norm(v))
    return out


# ---------------------------------------------------------------------------
# trainable text encoder
# ---------------------------------------------------------------------------

@dataclass
class TextEncoderParams:
    """Token embedding table plus a 2-layer MLP into the shared d_g space."""

    vocab: dict[str, int]
    embedding: Parameter  # |V| x d_t
    w1: Parameter         # d_t x d_g
    b1: Parameter
    w2: Parameter         # d_g x d_g
    b2: Parameter

    @property
    def unk_id(self) -> int:
        return self.vocab[UNK]

    def params(self) -> list[Parameter]:
        return [self.embedding, self.w1, self.b1, self.w2, self.b2]


def build_text_encoder(tokens, d_t: int, d_g: int,
                       rng: np.random.Generator) -> TextEncoderParams:
    vocab = {UNK: 0, MASK: 1}
    for t in tokens:
        if t not in vocab:
            vocab[t] = len(vocab)
    n = len(vocab)
    return TextEncoderParams(
        vocab=vocab,
        embedding=Parameter(Tensor2(rng.standard_normal((n, d_t)) / np.sqrt(d_t)),
                            name="text.embedding"),
        w1=Parameter(Tensor2(rng.standard_normal((d_t, d_g)) / np.sqrt(d_t)),
                     name="text.w1"),
        b1=Parameter(Tensor2(np.zeros((1, d_g))), name="text.b1"),
        w2=Parameter(Tensor2(rng.standard_normal((d_g, d_g)) / np.sqrt(d_g)),
                     name="text.w2"),
        b2=Parameter(Tensor2(np.zeros((1, d_g))), name="text.b2"),
    )


def token_ids(tokens: list[str], params: TextEncoderParams) -> list[int]:
    if not tokens:
        raise DimensionError("cannot encode an empty token list")
    return [params.vocab.get(t, params.unk_id) for t in tokens]


def encode_text_batch(token_lists: list[list[str]],
                      params: TextEncoderParams) -> Tensor2:
    """Mean token embedding through the MLP; one row per sample."""
    ids = [token_ids(toks, params) for toks in token_lists]
    pooled = embedding_mean(params.embedding.value, ids)
    hidden = relu(linear(pooled, params.w1.value, params.b1.value))
    return linear(hidden, params.w2.value, params.b2.value)


def encode_text(tokens: list[str], params: TextEncoderParams) -> Tensor2:
    return encode_text_batch([tokens], params)


# ---------------------------------------------------------------------------
# frozen-evidence projections
# ---------------------------------------------------------------------------

def project_image(image_vectors, w_i: Parameter, b_i: Parameter) -> Tensor2:
    """Each image vector independently through ReLU(x W_I + b_I)."""
    vecs = np.atleast_2d(np.asarray(image_vectors, dtype=np.float64))
    if vecs.shape[0] == 0:
        raise EmptyEvidenceError("project_image got no vectors")
    if vecs.shape[1] != w_i.value.rows:
        raise ConfigError(
            f"image vectors have dim {vecs.shape[1]}, projection expects {w_i.value.rows}")
    return relu(linear(const(vecs), w_i.value, b_i.value))


def project_speech(frames, w_s: Parameter, b_s: Parameter,
                   pool: str = "mean") -> Tensor2:
    """Mean-pool frames over time (pool='mean') then project, or per frame."""
    mat = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if mat.shape[0] == 0:
        raise EmptyEvidenceError("project_speech got no frames")
    if mat.shape[1] != w_s.value.rows:
        raise ConfigError(
            f"speech frames have dim {mat.shape[1]}, projection expects {w_s.value.rows}")
    if pool == "mean":
        mat = mat.mean(axis=0, keepdims=True)
    elif pool != "none":
        raise ConfigError(f"unknown speech pooling mode {pool!r}")
    return relu(linear(const(mat), w_s.value, b_s.value))
