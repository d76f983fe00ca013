"""Full model assembly: config, parameter init, and the batched forward pass."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from . import encoders, fusion, prediction
from .corpus import MaskedSample
from .errors import ConfigError, DataError
from .numerics import Parameter, Tensor2, concat_rows, const, tmean


@dataclass
class TrainConfig:
    d_g: int = 64
    d_v: int = 64
    d_s: int = 64
    d_t: int = 64
    batch_size: int = 128
    lr: float = 5e-5
    warmup_steps: int = 1000
    weight_decay: float = 0.01
    epochs: int = 20
    patience: int = 5
    seed: int = 0
    tau: float = 0.07
    alpha: float = 1.0
    beta: float = 0.1
    gamma: float = 0.1
    share_an: bool = True
    use_text: bool = True
    use_images: bool = True
    use_speech: bool = True
    cfa: bool = True
    ca: bool = True
    gu: bool = True
    sa: bool = True
    pool: str = "mean"
    split_ratio: float = 0.8
    toy_fallback: bool = True
    corpus_path: str = ""
    image_table_path: str = ""
    speech_table_path: str = ""

    def __post_init__(self):
        # structural checks only; the text-anchor rule is enforced when a
        # model is built (ablation harnesses construct text-free variants)
        self.validate(allow_no_text=True)

    def validate(self, allow_no_text: bool = False):
        if not self.use_text and not allow_no_text:
            raise ConfigError("text modality is the anchor and must stay enabled")
        # stack order: SA needs GU needs CA
        if self.sa and not self.gu:
            raise ConfigError("component flags violate stack order: sa requires gu")
        if self.gu and not self.ca:
            raise ConfigError("component flags violate stack order: gu requires ca")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if not self.use_images and not self.use_speech and not self.use_text:
            raise ConfigError("at least one modality must be enabled")
        if self.pool not in ("mean", "none"):
            raise ConfigError(f"unknown pooling mode {self.pool!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class ForwardResult:
    probs: Tensor2
    l_p: Tensor2 | None
    l_ti: Tensor2 | None
    l_ts: Tensor2 | None
    j: Tensor2 | None


class KomeiModel:
    """Config-driven instantiation of encoders, fusion stack, and classifier."""

    def __init__(self, config: TrainConfig, categories: list[str],
                 text_tokens=(), _allow_no_text: bool = False):
        config.validate(allow_no_text=_allow_no_text)
        self.config = config
        self.categories = list(categories)
        rng = np.random.default_rng(config.seed)
        d_g = config.d_g
        self.text = None
        if config.use_text:
            self.text = encoders.build_text_encoder(text_tokens, config.d_t, d_g, rng)
        self.proj: dict[str, tuple[Parameter, Parameter]] = {}
        if config.use_images:
            self.proj["image"] = (
                Parameter(Tensor2(rng.standard_normal((config.d_v, d_g)) / np.sqrt(config.d_v)),
                          name="proj.image.w"),
                Parameter(Tensor2(np.zeros((1, d_g))), name="proj.image.b"),
            )
        if config.use_speech:
            self.proj["speech"] = (
                Parameter(Tensor2(rng.standard_normal((config.d_s, d_g)) / np.sqrt(config.d_s)),
                          name="proj.speech.w"),
                Parameter(Tensor2(np.zeros((1, d_g))), name="proj.speech.b"),
            )
        self.fusion = None
        n_evidence = int(config.use_images) + int(config.use_speech)
        if config.use_text and n_evidence > 0:
            if config.ca:
                fuse_mult = 2  # (M_TI ; M_TS), absent branch zero-padded
            else:
                fuse_mult = 3  # base model: (T ; pooled I ; pooled S)
            self.fusion = fusion.FusionParams(
                d_g, rng, share_an=config.share_an, use_ca=config.ca,
                use_gu=config.gu, use_sa=config.sa, fuse_in_multiple=fuse_mult)
        self.classifier = prediction.build_classifier(len(categories), d_g, rng)
        self.align_cfg = fusion.AlignmentConfig(tau=config.tau)
        self.loss_weights = prediction.LossWeights(
            alpha=config.alpha, beta=config.beta, gamma=config.gamma)

    # -- parameters ---------------------------------------------------------

    def parameters(self) -> list[Parameter]:
        out: list[Parameter] = []
        if self.text is not None:
            out += self.text.params()
        for w, b in self.proj.values():
            out += [w, b]
        if self.fusion is not None:
            out += self.fusion.params()
        out += self.classifier.params()
        return out

    def parameter_group_counts(self) -> dict[str, int]:
        """Trainable scalar counts per architectural group (audit helper)."""
        groups = {"text": 0, "proj": 0, "ca": 0, "gu": 0, "sa": 0, "an": 0,
                  "fuse": 0, "cls": 0}
        if self.text is not None:
            groups["text"] = fusion.count_parameters(self.text.params())
        groups["proj"] = sum(w.value.data.size + b.value.data.size
                             for w, b in self.proj.values())
        if self.fusion is not None:
            for br in self.fusion.branches.values():
                groups["ca"] += fusion.count_parameters(br.ca_params())
                groups["sa"] += fusion.count_parameters(br.sa_params())
            if self.fusion.gate is not None:
                groups["gu"] += fusion.count_parameters(self.fusion.gate.params())
            seen = set()
            for an in (list(self.fusion.an_gu.values())
                       + list(self.fusion.an_sa.values())):
                for p in an.params():
                    if id(p) not in seen:
                        seen.add(id(p))
                        groups["an"] += p.value.data.size
            groups["fuse"] = fusion.count_parameters([self.fusion.w_h, self.fusion.b_h])
        groups["cls"] = fusion.count_parameters(self.classifier.params())
        return groups

    # -- evidence resolution ------------------------------------------------

    def _resolve_evidence(self, key: str, modality: str, tables: dict) -> np.ndarray:
        table = tables.get(modality)
        if table is not None and key in table.entries:
            return table.entries[key]
        if self.config.toy_fallback:
            dim = self.config.d_v if modality == "image" else self.config.d_s
            count = 4 if modality == "image" else 1
            return np.stack(encoders.toy_encode(key, modality, dim,
                                                self.config.seed, count=count))
        raise DataError(f"no {modality} evidence for media key {key!r} "
                        "and toy fallback is disabled")

    def _branch_inputs(self, samples, modality: str, tables: dict):
        """Projected evidence sequences and their per-sample pooled rows."""
        w, b = self.proj[modality]
        seqs = []
        for s in samples:
            raw = self._resolve_evidence(s.media_key, modality, tables)
            if modality == "image":
                seqs.append(encoders.project_image(raw, w, b))
            else:
                seqs.append(encoders.project_speech(raw, w, b, pool=self.config.pool))
        pooled = concat_rows([tmean(seq, axis=0) for seq in seqs])
        return seqs, pooled

    # -- forward ------------------------------------------------------------

    def forward(self, samples: list[MaskedSample], tables: dict,
                with_losses: bool = True) -> ForwardResult:
        if not samples:
            raise DataError("forward pass over an empty batch")
        cfg = self.config
        t_batch = None
        if cfg.use_text:
            t_batch = encoders.encode_text_batch([s.tokens for s in samples], self.text)

        branch_feats: dict[str, Tensor2] = {}   # refined per-branch features
        pooled_evidence: dict[str, Tensor2] = {}
        for modality, pair in (("image", "ti"), ("speech", "ts")):
            if modality not in self.proj:
                continue
            seqs, pooled = self._branch_inputs(samples, modality, tables)
            pooled_evidence[modality] = pooled
            if self.fusion is not None and cfg.ca:
                br = self.fusion.branches[pair]
                m = fusion.cross_modal_attention(t_batch, seqs, br)
                if cfg.gu:
                    m = fusion.gated_unit(m, self.fusion.gate, self.fusion.an_gu[pair])
                if cfg.sa:
                    m = fusion.self_attend_refine(m, br, self.fusion.an_sa[pair])
                branch_feats[modality] = m

        h = self._fused(t_batch, branch_feats, pooled_evidence, len(samples))
        probs = prediction.predict_scores(h, self.classifier)

        l_p = l_ti = l_ts = j = None
        if with_losses:
            golds = [s.label for s in samples]
            if any(g is None for g in golds):
                raise DataError("loss computation needs labeled samples")
            l_p = prediction.prediction_loss(probs, golds)
            if cfg.cfa and cfg.use_text:
                match = self._match_matrix(samples)
                if "image" in pooled_evidence:
                    l_ti = fusion.contrastive_align_loss(
                        t_batch, pooled_evidence["image"], match, self.align_cfg)
                if "speech" in pooled_evidence:
                    l_ts = fusion.contrastive_align_loss(
                        t_batch, pooled_evidence["speech"], match, self.align_cfg)
            j = prediction.total_loss(l_p, l_ti, l_ts, self.loss_weights)
        return ForwardResult(probs=probs, l_p=l_p, l_ti=l_ti, l_ts=l_ts, j=j)

    def _fused(self, t_batch, branch_feats, pooled_evidence, batch_size) -> Tensor2:
        cfg = self.config
        if self.fusion is None:
            # degenerate models for ablations: text-only or evidence-only
            if t_batch is not None:
                return t_batch
            # evidence-only: average the pooled per-modality rows
            from .numerics import add as _add, scale as _scale
            parts = [pooled_evidence[m] for m in ("image", "speech")
                     if m in pooled_evidence]
            acc = parts[0]
            for p in parts[1:]:
                acc = _add(acc, p)
            return _scale(acc, 1.0 / len(parts))
        if cfg.ca:
            return fusion.fuse(branch_feats.get("image"), branch_feats.get("speech"),
                               self.fusion.w_h, self.fusion.b_h)
        # base model: plain concat of pooled modality features
        d_g = cfg.d_g
        zero = const(np.zeros((batch_size, d_g)))
        from .numerics import concat_cols, linear
        cat = concat_cols([
            t_batch,
            pooled_evidence.get("image", zero),
            pooled_evidence.get("speech", zero),
        ])
        return linear(cat, self.fusion.w_h.value, self.fusion.b_h.value)

    @staticmethod
    def _match_matrix(samples) -> np.ndarray:
        keys = [s.media_key for s in samples]
        n = len(keys)
        m = np.zeros((n, n))
        for i in range(n):
            for jx in range(n):
                m[i, jx] = 1.0 if keys[i] == keys[jx] else 0.0
        return m

    # -- state --------------------------------------------------------------

    def named_tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for p in self.parameters():
            out[p.name] = p.value.data
        return out

    def load_named_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        own = {p.name: p for p in self.parameters()}
        missing = set(own) - set(tensors)
        extra = set(tensors) - set(own)
        if missing or extra:
            raise DataError(f"tensor name mismatch: missing={sorted(missing)}, "
                            f"unexpected={sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(tensors[name], dtype=np.float64)
            if arr.shape != p.value.data.shape:
                raise DataError(f"tensor {name}: shape {arr.shape} != {p.value.data.shape}")
            p.value.data = arr.copy()
