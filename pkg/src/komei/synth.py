"""Synthetic corpora with controllable signal placement.

Three scenarios:
  * "overfit": category-specific context words, learnable from text alone.
  * "image-planted" / "speech-planted": context words only identify a pair
    of categories; the disambiguating direction lives in the planted
    evidence vectors of that modality, so text-only models cap near 50%.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import KeywordVocabulary, MaskedSample, build_training_set
from .encoders import EmbeddingTable, toy_encode
from .errors import ConfigError


@dataclass
class SyntheticData:
    samples: list[MaskedSample]
    vocab: KeywordVocabulary
    categories: list[str]
    tables: dict  # modality -> EmbeddingTable


_FILLERS = ["really", "just", "some", "that", "the", "again", "today",
            "yesterday", "maybe", "honestly"]


def _keywords(vocab_size: int, n_categories: int):
    return [(f"kw{i}", i % n_categories) for i in range(vocab_size)]


def _planted_vectors(keywords, category_of, modality: str, dim: int,
                     seed: int, n_categories: int) -> EmbeddingTable:
    """Evidence = category direction plus small keyword-specific jitter."""
    rng = np.random.default_rng(seed + (17 if modality == "image" else 23))
    directions = rng.standard_normal((n_categories, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    entries = {}
    count = 4 if modality == "image" else 1
    for kw in keywords:
        base = directions[category_of[kw]]
        jitters = np.stack(toy_encode(kw, modality, dim, seed, count=count))
        entries[kw] = base + 0.05 * jitters
    return EmbeddingTable(modality=modality, dim=dim, entries=entries)


def _toy_tables(keywords, dim: int, seed: int) -> dict:
    tables = {}
    for modality, count in (("image", 4), ("speech", 1)):
        entries = {kw: np.stack(toy_encode(kw, modality, dim, seed, count=count))
                   for kw in keywords}
        tables[modality] = EmbeddingTable(modality=modality, dim=dim, entries=entries)
    return tables


def generate(kind: str, n_samples: int, n_categories: int, vocab_size: int,
             dim: int, seed: int) -> SyntheticData:
    if kind not in ("overfit", "image-planted", "speech-planted"):
        raise ConfigError(f"unknown synthetic corpus kind {kind!r}")
    if kind != "overfit" and n_categories % 2 != 0:
        raise ConfigError("planted corpora need an even category count (pairs)")
    rng = np.random.default_rng(seed)
    pairs = _keywords(vocab_size, n_categories)
    members = {kw: cat for kw, cat in pairs}
    categories = [f"cat{i}" for i in range(n_categories)]
    vocab = KeywordVocabulary(categories=categories, members=members,
                              domain="custom")

    sentences = []
    for _ in range(n_samples):
        kw, cat = pairs[rng.integers(len(pairs))]
        if kind == "overfit":
            ctx = [f"ctx{cat}a", f"ctx{cat}b"]
        else:
            pair_id = cat // 2  # context identifies the pair only
            ctx = [f"pair{pair_id}a", f"pair{pair_id}b"]
        filler = [_FILLERS[rng.integers(len(_FILLERS))],
                  _FILLERS[rng.integers(len(_FILLERS))]]
        words = [filler[0]] + ctx + [kw, filler[1]]
        sentences.append(" ".join(words))
    samples = build_training_set(sentences, vocab)

    keywords = list(members)
    category_of = members
    if kind == "image-planted":
        tables = _toy_tables(keywords, dim, seed)
        tables["image"] = _planted_vectors(keywords, category_of, "image", dim,
                                           seed, n_categories)
    elif kind == "speech-planted":
        tables = _toy_tables(keywords, dim, seed)
        tables["speech"] = _planted_vectors(keywords, category_of, "speech", dim,
                                            seed, n_categories)
    else:
        tables = _toy_tables(keywords, dim, seed)
    return SyntheticData(samples=samples, vocab=vocab, categories=categories,
                         tables=tables)
