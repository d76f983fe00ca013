"""Dynamic fusion: contrastive alignment, cross-attention, gated unit with
residual add-norm, length-1 self-attention refinement, and concat fusion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, EmptyEvidenceError
from .numerics import (Parameter, Tensor2, add, attention, concat_cols, concat_rows,
                       const, cosine_matrix, layer_norm, linear, log_softmax_rows,
                       matmul, mul, relu, row, scale, sigmoid, tsum)


@dataclass
class AlignmentConfig:
    tau: float = 0.07
    reduction: str = "mean"  # or "sum"

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError(f"temperature must be positive, got {self.tau}")
        if self.reduction not in ("mean", "sum"):
            raise ConfigError(f"unknown reduction {self.reduction!r}")


@dataclass
class AddNormParams:
    gain: Parameter
    bias: Parameter

    def params(self) -> list[Parameter]:
        return [self.gain, self.bias]


@dataclass
class BranchParams:
    """Cross-attention and self-attention projections for one modality pair."""

    w_q: Parameter
    w_k: Parameter
    w_v: Parameter
    sa_w_q: Parameter
    sa_w_k: Parameter
    sa_w_v: Parameter

    def ca_params(self) -> list[Parameter]:
        return [self.w_q, self.w_k, self.w_v]

    def sa_params(self) -> list[Parameter]:
        return [self.sa_w_q, self.sa_w_k, self.sa_w_v]


@dataclass
class GateParams:
    w_r: Parameter
    b_r: Parameter
    w_g: Parameter
    b_g: Parameter

    def params(self) -> list[Parameter]:
        return [self.w_r, self.b_r, self.w_g, self.b_g]


def _mat(rng, d_in, d_out, name):
    return Parameter(Tensor2(rng.standard_normal((d_in, d_out)) / np.sqrt(d_in)),
                     name=name)


def _vec(d, name, value=0.0):
    return Parameter(Tensor2(np.full((1, d), value)), name=name)


class FusionParams:
    """All trainable weights of the fusion stack.

    When ``share_an`` is true the TI and TS branches alias the same add-norm
    gain/bias Parameter objects, so the unique-parameter count drops by
    exactly two gain/bias pairs (4*d_g scalars).
    """

    def __init__(self, d_g: int, rng: np.random.Generator, share_an: bool = True,
                 use_ca: bool = True, use_gu: bool = True, use_sa: bool = True,
                 fuse_in_multiple: int = 2):
        self.d_g = d_g
        self.share_an = share_an
        self.use_ca = use_ca
        self.use_gu = use_gu
        self.use_sa = use_sa
        self.branches: dict[str, BranchParams] = {}
        self.gate: GateParams | None = None
        self.an_gu: dict[str, AddNormParams] = {}
        self.an_sa: dict[str, AddNormParams] = {}
        if use_ca:
            for pair in ("ti", "ts"):
                self.branches[pair] = BranchParams(
                    w_q=_mat(rng, d_g, d_g, f"fusion.{pair}.w_q"),
                    w_k=_mat(rng, d_g, d_g, f"fusion.{pair}.w_k"),
                    w_v=_mat(rng, d_g, d_g, f"fusion.{pair}.w_v"),
                    sa_w_q=_mat(rng, d_g, d_g, f"fusion.{pair}.sa_w_q"),
                    sa_w_k=_mat(rng, d_g, d_g, f"fusion.{pair}.sa_w_k"),
                    sa_w_v=_mat(rng, d_g, d_g, f"fusion.{pair}.sa_w_v"),
                )
        if use_gu:
            self.gate = GateParams(
                w_r=_mat(rng, d_g, d_g, "fusion.gate.w_r"),
                b_r=_vec(d_g, "fusion.gate.b_r"),
                w_g=_mat(rng, d_g, d_g, "fusion.gate.w_g"),
                b_g=_vec(d_g, "fusion.gate.b_g"),
            )
            self.an_gu = self._make_an("an_gu", d_g, share_an)
        if use_sa:
            self.an_sa = self._make_an("an_sa", d_g, share_an)
        self.w_h = _mat(rng, fuse_in_multiple * d_g, d_g, "fusion.w_h")
        self.b_h = _vec(d_g, "fusion.b_h")

    @staticmethod
    def _make_an(which: str, d_g: int, share: bool) -> dict[str, AddNormParams]:
        if share:
            shared = AddNormParams(
                gain=_vec(d_g, f"fusion.{which}.shared.gain", 1.0),
                bias=_vec(d_g, f"fusion.{which}.shared.bias", 0.0),
            )
            return {"ti": shared, "ts": shared}
        return {
            pair: AddNormParams(
                gain=_vec(d_g, f"fusion.{which}.{pair}.gain", 1.0),
                bias=_vec(d_g, f"fusion.{which}.{pair}.bias", 0.0),
            )
            for pair in ("ti", "ts")
        }

    def params(self) -> list[Parameter]:
        """Unique parameters (shared add-norms appear once)."""
        seen: dict[int, Parameter] = {}
        groups: list[Parameter] = []
        for br in self.branches.values():
            groups += br.ca_params() + br.sa_params()
        if self.gate is not None:
            groups += self.gate.params()
        for an in list(self.an_gu.values()) + list(self.an_sa.values()):
            groups += an.params()
        groups += [self.w_h, self.b_h]
        for p in groups:
            seen.setdefault(id(p), p)
        return list(seen.values())


def count_parameters(params) -> int:
    return sum(p.value.data.size for p in params if p.trainable)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def contrastive_align_loss(t_batch: Tensor2, e_batch: Tensor2,
                           match: np.ndarray, cfg: AlignmentConfig) -> Tensor2:
    """In-batch InfoNCE over cosine similarities, summed over matched pairs."""
    if t_batch.rows != e_batch.rows:
        raise DimensionError(
            f"batch sizes differ: text {t_batch.rows} vs evidence {e_batch.rows}")
    match = np.asarray(match, dtype=np.float64)
    if match.shape != (t_batch.rows, t_batch.rows):
        raise DimensionError(f"match matrix shape {match.shape} is not square over the batch")
    if np.any(match.sum(axis=1) < 1):
        raise DimensionError("every row needs at least one matched pair")
    logits = scale(cosine_matrix(t_batch, e_batch), 1.0 / cfg.tau)
    logp = log_softmax_rows(logits)
    total = scale(tsum(mul(logp, const(match))), -1.0)
    if cfg.reduction == "mean":
        total = scale(total, 1.0 / match.sum())
    return total


def cross_modal_attention(t_batch: Tensor2, evidence_seqs: list[Tensor2],
                          branch: BranchParams) -> Tensor2:
    """Per sample: Q from its text row, K/V from its evidence sequence."""
    if t_batch.rows != len(evidence_seqs):
        raise DimensionError(
            f"{len(evidence_seqs)} evidence sequences for {t_batch.rows} text rows")
    q_all = matmul(t_batch, branch.w_q.value)
    out_rows = []
    for i, ev in enumerate(evidence_seqs):
        if ev.rows == 0:
            raise EmptyEvidenceError(f"sample {i} has an empty evidence sequence")
        k = matmul(ev, branch.w_k.value)
        v = matmul(ev, branch.w_v.value)
        out_rows.append(attention(row(q_all, i), k, v))
    return concat_rows(out_rows)


def gated_unit(m: Tensor2, gate: GateParams, an: AddNormParams,
               eps: float = 1e-8) -> Tensor2:
    """Sigmoid gate on a ReLU feature of M, residual add, layer norm."""
    r = relu(linear(m, gate.w_r.value, gate.b_r.value))
    g = sigmoid(linear(r, gate.w_g.value, gate.b_g.value))
    gated = mul(g, m)
    return layer_norm(add(gated, m), an.gain.value, an.bias.value, eps)


def self_attend_refine(m_hat: Tensor2, branch: BranchParams, an: AddNormParams,
                       eps: float = 1e-8) -> Tensor2:
    """Each sample is a length-1 sequence, so attention over it returns its
    own projected value row exactly (softmax over one key is 1); Q/K receive
    no gradient. Computed batched via that identity.
    """
    sa_out = matmul(m_hat, branch.sa_w_v.value)
    return layer_norm(add(sa_out, m_hat), an.gain.value, an.bias.value, eps)


def fuse(m_ti: Tensor2 | None, m_ts: Tensor2 | None,
         w_h: Parameter, b_h: Parameter) -> Tensor2:
    """Concat the two branch features (zero vector for an absent branch)."""
    if m_ti is None and m_ts is None:
        raise ConfigError("fuse needs at least one modality branch")
    present = m_ti if m_ti is not None else m_ts
    d_g = present.cols
    zero = const(np.zeros((present.rows, d_g)))
    left = m_ti if m_ti is not None else zero
    right = m_ts if m_ts is not None else zero
    cat = concat_cols([left, right])
    if cat.cols != w_h.value.rows:
        raise DimensionError(
            f"fusion weight expects {w_h.value.rows} inputs, got {cat.cols}")
    return linear(cat, w_h.value, b_h.value)
