"""Keyword-oriented multimodal euphemism category identification."""

from .corpus import KeywordVocabulary, MaskedSample
from .encoders import EmbeddingTable, load_embedding_table, write_embedding_table
from .estimator import EuphemismIdentifier
from .model import KomeiModel, TrainConfig
from .trainer import EvalReport, evaluate, train

__all__ = [
    "EmbeddingTable",
    "EuphemismIdentifier",
    "EvalReport",
    "KeywordVocabulary",
    "KomeiModel",
    "MaskedSample",
    "TrainConfig",
    "evaluate",
    "load_embedding_table",
    "train",
    "write_embedding_table",
]
