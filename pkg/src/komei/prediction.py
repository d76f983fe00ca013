"""Category scoring, prediction/total losses, and Acc@k evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .numerics import (Parameter, Tensor2, add, const, log, matmul, mul,
                       scale, softmax_rows, transpose, tsum)


@dataclass
class ClassifierParams:
    """Learned class-label embeddings plus the scoring vector and bias."""

    h: Parameter       # n x d_g class embeddings
    w: Parameter       # 1 x d_g scoring vector
    b: Parameter       # 1 x 1 bias

    def params(self) -> list[Parameter]:
        return [self.h, self.w, self.b]

    @property
    def n_categories(self) -> int:
        return self.h.value.rows


def build_classifier(n_categories: int, d_g: int,
                     rng: np.random.Generator) -> ClassifierParams:
    if n_categories == 0:
        raise ConfigError("classifier needs at least one category")
    return ClassifierParams(
        h=Parameter(Tensor2(rng.standard_normal((n_categories, d_g)) / np.sqrt(d_g)),
                    name="cls.h"),
        w=Parameter(Tensor2(rng.standard_normal((1, d_g)) / np.sqrt(d_g)),
                    name="cls.w"),
        b=Parameter(Tensor2(np.zeros((1, 1))), name="cls.b"),
    )


@dataclass
class LossWeights:
    alpha: float = 1.0
    beta: float = 0.1
    gamma: float = 0.1

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive: prediction must contribute")
        if self.beta < 0 or self.gamma < 0:
            raise ConfigError("alignment weights must be non-negative")


def predict_scores(h_batch: Tensor2, cls: ClassifierParams) -> Tensor2:
    """logit[b][j] = w . (h_j * H_b) + bias, rows softmax-normalized."""
    if cls.n_categories == 0:
        raise ConfigError("classifier has no categories")
    if h_batch.cols != cls.h.value.cols:
        raise DimensionError(
            f"fused features have dim {h_batch.cols}, classifier expects {cls.h.value.cols}")
    weighted = mul(cls.h.value, cls.w.value)          # n x d_g
    logits = add(matmul(h_batch, transpose(weighted)), cls.b.value)
    return softmax_rows(logits)


def prediction_loss(probs: Tensor2, gold: list[int]) -> Tensor2:
    """Mean one-hot cross-entropy over the batch."""
    n = probs.cols
    onehot = np.zeros((probs.rows, n))
    for i, g in enumerate(gold):
        if not 0 <= g < n:
            raise DimensionError(f"gold index {g} out of range for {n} categories")
        onehot[i, g] = 1.0
    picked = tsum(mul(log(probs), const(onehot)))
    return scale(picked, -1.0 / probs.rows)


def total_loss(l_p: Tensor2, l_ti: Tensor2 | None, l_ts: Tensor2 | None,
               w: LossWeights) -> Tensor2:
    """J = alpha*L_P + beta*L_TI + gamma*L_TS; absent terms contribute 0."""
    j = scale(l_p, w.alpha)
    if l_ti is not None:
        j = add(j, scale(l_ti, w.beta))
    if l_ts is not None:
        j = add(j, scale(l_ts, w.gamma))
    return j


def top_k_hit(probs_row: np.ndarray, gold: int, k: int) -> int:
    """1 iff gold is among the k largest scores; ties go to the lower index."""
    p = np.asarray(probs_row, dtype=np.float64).reshape(-1)
    if not 1 <= k <= p.size:
        raise DimensionError(f"k={k} invalid for {p.size} categories")
    order = np.argsort(-p, kind="stable")  # stable: ties by ascending index
    return int(gold in order[:k])


def accuracy_report(probs: np.ndarray, golds: list[int],
                    ks=(1, 2, 3)) -> dict[int, float]:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape[0] != len(golds) or probs.shape[0] == 0:
        raise DimensionError("probs rows must match a non-empty gold list")
    ks = [k for k in ks if k <= probs.shape[1]]
    hits = {k: 0 for k in ks}
    for row_, gold in zip(probs, golds):
        for k in ks:
            hits[k] += top_k_hit(row_, gold, k)
    return {k: hits[k] / len(golds) for k in ks}
