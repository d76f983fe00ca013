"""Masked-keyword corpus construction, splitting, and JSONL persistence.

Training samples mask known category keywords; test samples mask slang
surfaces mapped by a ground-truth table. The mask sentinel is the literal
token "[MASK]". Tokenization is deliberately simple and frozen: lowercase,
then runs of [a-z0-9] optionally joined by apostrophes.
"""

from __future__ import annotations

import json
import math
import random
import re
import warnings
from dataclasses import dataclass, replace

from .errors import ConfigError, CorpusError

MASK = "[MASK]"

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:'[a-z0-9]+)*")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass
class KeywordVocabulary:
    """Category names plus the surface keywords belonging to each category."""

    categories: list[str]
    members: dict[str, int]
    domain: str = "custom"
    has_images: bool = True
    has_speech: bool = True

    def __post_init__(self):
        if len(set(self.categories)) != len(self.categories):
            raise ConfigError("duplicate category names in vocabulary")
        for kw, idx in self.members.items():
            if not 0 <= idx < len(self.categories):
                raise ConfigError(f"keyword {kw!r} maps to invalid category {idx}")

    def to_json(self) -> dict:
        return {
            "categories": self.categories,
            "members": self.members,
            "domain": self.domain,
            "has_images": self.has_images,
            "has_speech": self.has_speech,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "KeywordVocabulary":
        return cls(
            categories=list(obj["categories"]),
            members=dict(obj["members"]),
            domain=obj.get("domain", "custom"),
            has_images=bool(obj.get("has_images", True)),
            has_speech=bool(obj.get("has_speech", True)),
        )

    @classmethod
    def load(cls, path) -> "KeywordVocabulary":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json(json.load(f))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, indent=2, sort_keys=True)


@dataclass
class MaskedSample:
    """One sentence with exactly one [MASK] slot and its media key."""

    id: str
    tokens: list[str]
    label: int | None
    media_key: str
    split: str = "train"

    def __post_init__(self):
        if self.tokens.count(MASK) != 1:
            raise CorpusError(f"sample {self.id}: expected exactly one {MASK}")


def _surface_patterns(surfaces, order: dict[str, int]):
    """Token tuples to match, longest first, ties by vocabulary order."""
    pats = [(tuple(tokenize(s)), s) for s in surfaces]
    pats = [(toks, s) for toks, s in pats if toks]
    pats.sort(key=lambda p: (-len(p[0]), order[p[1]]))
    return pats


def _mask_occurrences(tokens: list[str], patterns) -> list[tuple[int, int, str]]:
    """Non-overlapping left-to-right scan; returns (start, end, surface)."""
    hits = []
    i = 0
    while i < len(tokens):
        matched = None
        for toks, surface in patterns:
            if tuple(tokens[i:i + len(toks)]) == toks:
                matched = (i, i + len(toks), surface)
                break
        if matched:
            hits.append(matched)
            i = matched[1]
        else:
            i += 1
    return hits


def build_training_set(raw_sentences, vocab: KeywordVocabulary) -> list[MaskedSample]:
    """One sample per keyword occurrence, labeled with the keyword's category."""
    if not vocab.members:
        raise ConfigError("cannot build a training set from an empty vocabulary")
    order = {kw: i for i, kw in enumerate(vocab.members)}
    patterns = _surface_patterns(vocab.members, order)
    samples = []
    for si, sentence in enumerate(raw_sentences):
        tokens = tokenize(sentence)
        for oi, (lo, hi, surface) in enumerate(_mask_occurrences(tokens, patterns)):
            masked = tokens[:lo] + [MASK] + tokens[hi:]
            samples.append(MaskedSample(
                id=f"tr-{si}-{oi}",
                tokens=masked,
                label=vocab.members[surface],
                media_key=surface,
                split="train",
            ))
    return samples


def build_test_set(raw_sentences, euphemisms: dict[str, int],
                   vocab: KeywordVocabulary | None = None) -> list[MaskedSample]:
    """Same masking rule keyed on slang surfaces; media key is the surface."""
    if not euphemisms:
        raise ConfigError("cannot build a test set from an empty ground-truth map")
    if vocab is not None:
        collisions = sorted(set(euphemisms) & set(vocab.members))
        if collisions:
            warnings.warn(
                f"test surfaces also appear in the keyword vocabulary: {collisions}; "
                "treating them as test occurrences")
    order = {kw: i for i, kw in enumerate(euphemisms)}
    patterns = _surface_patterns(euphemisms, order)
    samples = []
    for si, sentence in enumerate(raw_sentences):
        tokens = tokenize(sentence)
        for oi, (lo, hi, surface) in enumerate(_mask_occurrences(tokens, patterns)):
            masked = tokens[:lo] + [MASK] + tokens[hi:]
            samples.append(MaskedSample(
                id=f"te-{si}-{oi}",
                tokens=masked,
                label=euphemisms[surface],
                media_key=surface,
                split="test",
            ))
    return samples


def split(samples: list[MaskedSample], ratio: float, seed: int):
    """Seeded shuffle, first ceil(ratio*N) samples to train, rest to val."""
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must be in (0, 1), got {ratio}")
    if not samples:
        raise CorpusError("cannot split an empty corpus")
    shuffled = list(samples)
    random.Random(seed).shuffle(shuffled)
    n_train = math.ceil(ratio * len(shuffled))
    if n_train == len(shuffled):
        warnings.warn("split produced an empty validation set")
    train = [replace(s, split="train") for s in shuffled[:n_train]]
    val = [replace(s, split="val") for s in shuffled[n_train:]]
    return train, val


_FIELDS = ("id", "tokens", "label", "media_key", "split")


def write_corpus(samples, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in samples:
            rec = {"id": s.id, "tokens": s.tokens, "label": s.label,
                   "media_key": s.media_key, "split": s.split}
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_corpus(path) -> list[MaskedSample]:
    samples = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"{path}: line {lineno}: invalid JSON: {e}") from e
            missing = [k for k in _FIELDS if k not in rec]
            if missing:
                raise CorpusError(
                    f"{path}: line {lineno}: missing fields {missing}")
            try:
                samples.append(MaskedSample(
                    id=str(rec["id"]),
                    tokens=list(rec["tokens"]),
                    label=None if rec["label"] is None else int(rec["label"]),
                    media_key=str(rec["media_key"]),
                    split=str(rec["split"]),
                ))
            except CorpusError as e:
                raise CorpusError(f"{path}: line {lineno}: {e}") from e
    return samples
