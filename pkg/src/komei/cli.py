"""Command-line surface.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 check failure
(gradient check above tolerance).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import checkpoint as ckpt
from . import corpus as corpus_mod
from . import encoders, synth, trainer, verify
from .errors import KomeiError
from .model import TrainConfig

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_config_file(path: str) -> dict:
    """Flat key=value lines, '#' comments, typed against TrainConfig fields."""
    fields = TrainConfig.__dataclass_fields__
    out = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}: line {lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in fields:
                raise UsageError(f"{path}: line {lineno}: unknown config key {key!r}")
            out[key] = _coerce(key, value, fields[key].type)
    return out


def _coerce(key: str, value: str, ftype) -> object:
    ftype = str(ftype)
    if "bool" in ftype:
        low = value.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise UsageError(f"config key {key}: expected a boolean, got {value!r}")
    if "int" in ftype:
        return int(value)
    if "float" in ftype:
        return float(value)
    return value


def _build_config(args) -> TrainConfig:
    d = TrainConfig().to_dict()
    if args.config:
        d.update(_parse_config_file(args.config))
    for key, value in (args.set or []):
        d[key] = value
    if args.seed is not None:
        d["seed"] = args.seed
    elif "KOMEI_SEED" in os.environ and not args.config_has_seed:
        d["seed"] = int(os.environ["KOMEI_SEED"])
    return TrainConfig.from_dict(d)


def _set_pair(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    key = key.strip()
    fields = TrainConfig.__dataclass_fields__
    if key not in fields:
        raise argparse.ArgumentTypeError(f"unknown config key {key!r}")
    return key, _coerce(key, value.strip(), fields[key].type)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int, default=None,
                   help="seed override (falls back to KOMEI_SEED)")
    p.add_argument("--set", action="append", type=_set_pair, metavar="KEY=VALUE",
                   help="override a single config key")


def _load_tables(args) -> dict:
    tables = {}
    if getattr(args, "images", None):
        tables["image"] = encoders.load_embedding_table(args.images)
    if getattr(args, "speech", None):
        tables["speech"] = encoders.load_embedding_table(args.speech)
    return tables


def _split_corpus(samples):
    train_s = [s for s in samples if s.split == "train"]
    val_s = [s for s in samples if s.split == "val"]
    return train_s, val_s


def build_parser() -> _Parser:
    parser = _Parser(prog="komei", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-corpus", help="mask keywords in raw sentences")
    _add_common(p)
    p.add_argument("--sentences", required=True, help="one raw sentence per line")
    p.add_argument("--vocab", required=True, help="keyword vocabulary JSON")
    p.add_argument("--ground-truth", help="slang->category JSON (test mode)")
    p.add_argument("--out", required=True)
    p.add_argument("--split-ratio", type=float, default=0.8)

    p = sub.add_parser("gen-synthetic", help="write a synthetic corpus + tables")
    _add_common(p)
    p.add_argument("--kind", required=True,
                   choices=["overfit", "image-planted", "speech-planted"])
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--categories", type=int, default=5)
    p.add_argument("--vocab-size", type=int, default=50)
    p.add_argument("--dim", type=int, default=32)

    p = sub.add_parser("train", help="train a model and save a checkpoint")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--categories", required=True,
                   help="vocabulary JSON (category names)")
    p.add_argument("--images")
    p.add_argument("--speech")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--loss-curve", help="write loss curve CSV here")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--images")
    p.add_argument("--speech")
    p.add_argument("--json", action="store_true", help="machine-readable summary")
    p.add_argument("--dump", help="write per-sample prediction CSV here")

    p = sub.add_parser("ablate", help="run an ablation grid")
    _add_common(p)
    p.add_argument("--which", required=True, choices=["modalities", "components"])
    p.add_argument("--corpus", required=True)
    p.add_argument("--test-corpus")
    p.add_argument("--categories", required=True)
    p.add_argument("--images")
    p.add_argument("--speech")
    p.add_argument("--out", help="write the grid as CSV here")

    p = sub.add_parser("gradcheck", help="verify gradients on a toy model")
    _add_common(p)
    p.add_argument("--dg", type=int, default=8)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--tolerance", type=float, default=1e-4)

    p = sub.add_parser("dump-features", help="export fused features as CSV")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--images")
    p.add_argument("--speech")
    p.add_argument("--out", required=True)
    return parser


def _cmd_build_corpus(args) -> int:
    with open(args.sentences, "r", encoding="utf-8") as f:
        sentences = [line.rstrip("\n") for line in f if line.strip()]
    vocab = corpus_mod.KeywordVocabulary.load(args.vocab)
    seed = args.seed if args.seed is not None else int(os.environ.get("KOMEI_SEED", "0"))
    if args.ground_truth:
        with open(args.ground_truth, "r", encoding="utf-8") as f:
            gt = {str(k): int(v) for k, v in json.load(f).items()}
        samples = corpus_mod.build_test_set(sentences, gt, vocab=vocab)
    else:
        samples = corpus_mod.build_training_set(sentences, vocab)
        train_s, val_s = corpus_mod.split(samples, args.split_ratio, seed)
        samples = train_s + val_s
    corpus_mod.write_corpus(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def _cmd_gen_synthetic(args) -> int:
    seed = args.seed if args.seed is not None else int(os.environ.get("KOMEI_SEED", "0"))
    data = synth.generate(args.kind, args.n, args.categories, args.vocab_size,
                          args.dim, seed)
    os.makedirs(args.out_dir, exist_ok=True)
    train_s, val_s = corpus_mod.split(data.samples, 0.8, seed)
    corpus_mod.write_corpus(train_s + val_s,
                            os.path.join(args.out_dir, "corpus.jsonl"))
    data.vocab.save(os.path.join(args.out_dir, "vocab.json"))
    for modality, table in data.tables.items():
        encoders.write_embedding_table(
            table, os.path.join(args.out_dir, f"{modality}s.kome"))
    print(f"wrote synthetic '{args.kind}' corpus to {args.out_dir}")
    return 0


def _cmd_train(args) -> int:
    config = _build_config(args)
    samples = corpus_mod.read_corpus(args.corpus)
    vocab = corpus_mod.KeywordVocabulary.load(args.categories)
    tables = _load_tables(args)
    train_s, val_s = _split_corpus(samples)
    result = trainer.train(config, train_s, val_s, tables, vocab.categories)
    ckpt.save_checkpoint(result.model, args.out)
    if args.loss_curve:
        trainer.write_loss_curve(result.loss_curve, args.loss_curve)
    if result.best_val_acc is not None:
        print(f"best val acc@1: {result.best_val_acc:.4f}")
    print(f"saved checkpoint to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    model = ckpt.load_checkpoint(args.checkpoint)
    samples = corpus_mod.read_corpus(args.corpus)
    tables = _load_tables(args)
    report = trainer.evaluate(model, samples, tables)
    if args.dump:
        trainer.predictions_csv(model, samples, tables, args.dump)
    if args.json:
        print(json.dumps(report.as_dict(), sort_keys=True))
    else:
        for k in sorted(report.acc_at):
            print(f"acc@{k}: {report.acc_at[k]:.4f}")
        print(f"samples: {report.sample_count}")
    return 0


def _cmd_ablate(args) -> int:
    config = _build_config(args)
    samples = corpus_mod.read_corpus(args.corpus)
    vocab = corpus_mod.KeywordVocabulary.load(args.categories)
    tables = _load_tables(args)
    train_s, val_s = _split_corpus(samples)
    test_s = (corpus_mod.read_corpus(args.test_corpus)
              if args.test_corpus else (val_s or train_s))
    rows = []
    if args.which == "modalities":
        grid = trainer.ablate_modalities(
            config, train_s, val_s, test_s, tables, vocab.categories,
            domain_has_images=vocab.has_images,
            domain_has_speech=vocab.has_speech)
        for name, report in grid:
            if report is None:
                print(f"{name:<18} skipped (modality unavailable in this domain)")
                rows.append((name, "", "", "", ""))
            else:
                print(f"{name:<18} acc@1={report.acc_at[1]:.4f} "
                      f"acc@2={report.acc_at.get(2, float('nan')):.4f} "
                      f"acc@3={report.acc_at.get(3, float('nan')):.4f}")
                rows.append((name, report.acc_at.get(1), report.acc_at.get(2),
                             report.acc_at.get(3), report.sample_count))
    else:
        grid = trainer.ablate_components(
            config, train_s, val_s, test_s, tables, vocab.categories)
        for name, report, counts in grid:
            total = sum(counts.values())
            print(f"{name:<18} acc@1={report.acc_at[1]:.4f} params={total} "
                  f"(ca={counts['ca']} gu={counts['gu']} sa={counts['sa']} "
                  f"an={counts['an']})")
            rows.append((name, report.acc_at.get(1), report.acc_at.get(2),
                         report.acc_at.get(3), total))
    if args.out:
        import csv as _csv
        with open(args.out, "w", encoding="utf-8", newline="") as f:
            w = _csv.writer(f)
            w.writerow(["row", "acc1", "acc2", "acc3", "extra"])
            w.writerows(rows)
    return 0


def _cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else int(os.environ.get("KOMEI_SEED", "0"))
    err = verify.full_model_grad_check(d_g=args.dg, batch=args.batch, seed=seed)
    print(f"max relative gradient error: {err:.3e}")
    if err >= args.tolerance:
        print(f"FAIL: above tolerance {args.tolerance:g}", file=sys.stderr)
        return 3
    return 0


def _cmd_dump_features(args) -> int:
    model = ckpt.load_checkpoint(args.checkpoint)
    samples = corpus_mod.read_corpus(args.corpus)
    tables = _load_tables(args)
    trainer.dump_fused_features(model, samples, tables, args.out)
    print(f"wrote {len(samples)} feature rows to {args.out}")
    return 0


_COMMANDS = {
    "build-corpus": _cmd_build_corpus,
    "gen-synthetic": _cmd_gen_synthetic,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "gradcheck": _cmd_gradcheck,
    "dump-features": _cmd_dump_features,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.config_has_seed = False
        if getattr(args, "config", None):
            args.config_has_seed = "seed" in _parse_config_file(args.config)
        return _COMMANDS[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except KomeiError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
