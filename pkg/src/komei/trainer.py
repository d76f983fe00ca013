"""Training loop, evaluation, and the modality/component ablation grids."""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass

import numpy as np

from .corpus import MaskedSample
from .errors import CorpusError, DataError
from .model import KomeiModel, TrainConfig
from .numerics import OptimState, adamw_step, backward, no_grad, zero_grads
from .prediction import accuracy_report


@dataclass
class EvalReport:
    acc_at: dict[int, float]
    per_category_hits: dict[int, int]
    sample_count: int
    config_hash: str

    def as_dict(self) -> dict:
        return {
            "acc1": self.acc_at.get(1),
            "acc2": self.acc_at.get(2),
            "acc3": self.acc_at.get(3),
            "n": self.sample_count,
            "config_hash": self.config_hash,
        }


@dataclass
class TrainResult:
    model: KomeiModel
    loss_curve: list[tuple]  # (step, L_P, L_TI, L_TS, J)
    val_history: list[float]
    best_val_acc: float | None


def _check_media(samples, tables, config: TrainConfig) -> None:
    if config.toy_fallback:
        return
    missing = set()
    for modality in ("image", "speech"):
        if (modality == "image" and not config.use_images) or \
           (modality == "speech" and not config.use_speech):
            continue
        table = tables.get(modality)
        for s in samples:
            if table is None or s.media_key not in table.entries:
                missing.add((modality, s.media_key))
    if missing:
        keys = sorted(f"{m}:{k}" for m, k in missing)
        raise DataError(f"unresolvable media keys with toy fallback disabled: {keys}")


def train(config: TrainConfig, train_samples: list[MaskedSample],
          val_samples: list[MaskedSample], tables: dict,
          categories: list[str], _allow_no_text: bool = False) -> TrainResult:
    """Deterministic AdamW training with linear warmup and early stopping."""
    if not train_samples:
        raise CorpusError("empty training set")
    _check_media(train_samples + val_samples, tables, config)
    all_tokens = [t for s in train_samples for t in s.tokens]
    model = KomeiModel(config, categories, text_tokens=all_tokens,
                       _allow_no_text=_allow_no_text)
    params = model.parameters()
    steps_per_epoch = max(1, -(-len(train_samples) // config.batch_size))
    total_steps = steps_per_epoch * config.epochs if config.epochs > 0 else None
    state = OptimState(lr=config.lr, weight_decay=config.weight_decay,
                       warmup_steps=config.warmup_steps, total_steps=total_steps)
    order_rng = random.Random(config.seed)
    loss_curve = []
    val_history = []
    best_val = None
    best_tensors = None
    stale = 0
    step = 0
    for _ in range(config.epochs):
        order = list(range(len(train_samples)))
        order_rng.shuffle(order)
        for lo in range(0, len(order), config.batch_size):
            batch = [train_samples[i] for i in order[lo:lo + config.batch_size]]
            zero_grads(params)
            res = model.forward(batch, tables, with_losses=True)
            backward(res.j)
            adamw_step(params, state)
            step += 1
            loss_curve.append((
                step,
                res.l_p.item(),
                res.l_ti.item() if res.l_ti is not None else 0.0,
                res.l_ts.item() if res.l_ts is not None else 0.0,
                res.j.item(),
            ))
        if val_samples:
            acc = _accuracy(model, val_samples, tables, k=1)
            val_history.append(acc)
            if best_val is None or acc > best_val:
                best_val = acc
                best_tensors = {k: v.copy() for k, v in model.named_tensors().items()}
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    if best_tensors is not None:
        model.load_named_tensors(best_tensors)
    return TrainResult(model=model, loss_curve=loss_curve,
                       val_history=val_history, best_val_acc=best_val)


def _batched_probs(model: KomeiModel, samples, tables) -> np.ndarray:
    rows = []
    bs = model.config.batch_size
    with no_grad():
        for lo in range(0, len(samples), bs):
            res = model.forward(samples[lo:lo + bs], tables, with_losses=False)
            rows.append(res.probs.data)
    return np.concatenate(rows, axis=0)


def _accuracy(model, samples, tables, k=1) -> float:
    probs = _batched_probs(model, samples, tables)
    golds = [s.label for s in samples]
    return accuracy_report(probs, golds, ks=(k,))[k]


def evaluate(model: KomeiModel, test_samples: list[MaskedSample],
             tables: dict) -> EvalReport:
    if not test_samples:
        raise CorpusError("empty test set")
    if any(s.label is None for s in test_samples):
        raise DataError("evaluation needs labeled samples")
    probs = _batched_probs(model, test_samples, tables)
    golds = [s.label for s in test_samples]
    acc = accuracy_report(probs, golds)
    hits = {}
    order = np.argsort(-probs, axis=1, kind="stable")
    for g, top in zip(golds, order[:, 0]):
        if g == top:
            hits[g] = hits.get(g, 0) + 1
    return EvalReport(acc_at=acc, per_category_hits=hits,
                      sample_count=len(test_samples),
                      config_hash=model.config.config_hash())


def predictions_csv(model: KomeiModel, samples, tables, path) -> None:
    """Per-sample dump: gold category plus top-3 predictions with scores."""
    probs = _batched_probs(model, samples, tables)
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "gold", "pred1", "p1", "pred2", "p2", "pred3", "p3"])
        for s, row in zip(samples, probs):
            order = np.argsort(-row, kind="stable")[:3]
            cells = [s.id, "" if s.label is None else s.label]
            for j in order:
                cells += [int(j), f"{row[j]:.17g}"]
            while len(cells) < 8:
                cells += ["", ""]
            w.writerow(cells)


def dump_fused_features(model: KomeiModel, samples, tables, path) -> None:
    """CSV of fused per-sample feature vectors for external projection tools."""
    rows = []
    bs = model.config.batch_size
    for lo in range(0, len(samples), bs):
        batch = samples[lo:lo + bs]
        t_batch = None
        if model.config.use_text:
            from .encoders import encode_text_batch
            t_batch = encode_text_batch([s.tokens for s in batch], model.text)
        branch_feats, pooled = {}, {}
        from . import fusion as fu
        for modality, pair in (("image", "ti"), ("speech", "ts")):
            if modality not in model.proj:
                continue
            seqs, pooled_rows = model._branch_inputs(batch, modality, tables)
            pooled[modality] = pooled_rows
            if model.fusion is not None and model.config.ca:
                br = model.fusion.branches[pair]
                m = fu.cross_modal_attention(t_batch, seqs, br)
                if model.config.gu:
                    m = fu.gated_unit(m, model.fusion.gate, model.fusion.an_gu[pair])
                if model.config.sa:
                    m = fu.self_attend_refine(m, br, model.fusion.an_sa[pair])
                branch_feats[modality] = m
        h = model._fused(t_batch, branch_feats, pooled, len(batch))
        rows.append(h.data)
    feats = np.concatenate(rows, axis=0)
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "label"] + [f"h{i}" for i in range(feats.shape[1])])
        for s, row in zip(samples, feats):
            w.writerow([s.id, "" if s.label is None else s.label]
                       + [f"{x:.17g}" for x in row])


def write_loss_curve(loss_curve, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "l_p", "l_ti", "l_ts", "j"])
        for row in loss_curve:
            w.writerow([row[0]] + [f"{x:.17g}" for x in row[1:]])


# ---------------------------------------------------------------------------
# ablation grids
# ---------------------------------------------------------------------------

def _run(config, train_s, val_s, test_s, tables, categories, allow_no_text=False):
    result = train(config, train_s, val_s, tables, categories,
                   _allow_no_text=allow_no_text)
    return evaluate(result.model, test_s, tables), result.model


def ablate_modalities(base: TrainConfig, train_s, val_s, test_s, tables,
                      categories, domain_has_images: bool = True,
                      domain_has_speech: bool = True):
    """Rows over modality subsets; image rows are skipped on image-less domains."""
    combos = [
        ("T", dict(use_text=True, use_images=False, use_speech=False)),
        ("V", dict(use_text=False, use_images=True, use_speech=False)),
        ("A", dict(use_text=False, use_images=False, use_speech=True)),
        ("T+V", dict(use_text=True, use_images=True, use_speech=False)),
        ("T+A", dict(use_text=True, use_images=False, use_speech=True)),
        ("T+V+A", dict(use_text=True, use_images=True, use_speech=True)),
    ]
    out = []
    for name, flags in combos:
        if "V" in name and not domain_has_images:
            out.append((name, None))  # skipped, mirrors dash rows
            continue
        if "A" in name and not domain_has_speech:
            out.append((name, None))
            continue
        cfg_d = base.to_dict()
        cfg_d.update(flags)
        n_evidence = int(flags["use_images"]) + int(flags["use_speech"])
        if not flags["use_text"] or n_evidence == 0:
            # evidence-only / text-only rows bypass the fusion stack
            cfg_d.update(cfa=False, ca=False, gu=False, sa=False)
        cfg = TrainConfig.from_dict(cfg_d)
        report, _ = _run(cfg, train_s, val_s, test_s, tables, categories,
                         allow_no_text=not flags["use_text"])
        out.append((name, report))
    return out


def ablate_components(base: TrainConfig, train_s, val_s, test_s, tables,
                      categories):
    """Stack rows (base concat model up to full stack) plus the add-norm
    sharing pair; returns (name, report, parameter_group_counts)."""
    rows = [
        ("base", dict(cfa=False, ca=False, gu=False, sa=False)),
        ("base+CFA", dict(cfa=True, ca=False, gu=False, sa=False)),
        ("base+CFA+CA", dict(cfa=True, ca=True, gu=False, sa=False)),
        ("base+CFA+CA+GU", dict(cfa=True, ca=True, gu=True, sa=False)),
        ("base+CFA+CA+GU+SA", dict(cfa=True, ca=True, gu=True, sa=True)),
        ("full", dict(cfa=base.cfa, ca=base.ca, gu=base.gu, sa=base.sa)),
        ("AN_NotShare", dict(cfa=True, ca=True, gu=True, sa=True, share_an=False)),
        ("AN_Share", dict(cfa=True, ca=True, gu=True, sa=True, share_an=True)),
    ]
    out = []
    for name, flags in rows:
        cfg_d = base.to_dict()
        cfg_d.update(flags)
        cfg = TrainConfig.from_dict(cfg_d)
        report, mdl = _run(cfg, train_s, val_s, test_s, tables, categories)
        out.append((name, report, mdl.parameter_group_counts()))
    return out
