import numpy as np
import pytest

from komei import synth
from komei.checkpoint import load_checkpoint, save_checkpoint
from komei.corpus import split
from komei.errors import (ConfigError, CorpusError, DataError, FormatError)
from komei.model import KomeiModel, TrainConfig
from komei.trainer import (ablate_components, ablate_modalities,
                           dump_fused_features, evaluate, predictions_csv,
                           train, write_loss_curve)

SMALL = dict(d_g=8, d_v=8, d_s=8, d_t=8, epochs=2, lr=1e-3, warmup_steps=2,
             batch_size=16, seed=0)


@pytest.fixture(scope="module")
def tiny_data():
    data = synth.generate("overfit", n_samples=40, n_categories=3,
                          vocab_size=9, dim=8, seed=0)
    train_s, val_s = split(data.samples, ratio=0.8, seed=0)
    return data, train_s, val_s


def _train(tiny_data, **overrides):
    data, train_s, val_s = tiny_data
    cfg = TrainConfig(**{**SMALL, **overrides})
    return train(cfg, train_s, val_s, data.tables, data.categories), data


# -- config ---------------------------------------------------------------------

def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"d_g": 8, "bogus": 1})


def test_config_round_trip_and_hash():
    cfg = TrainConfig(**SMALL)
    again = TrainConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()
    assert TrainConfig(**{**SMALL, "lr": 2e-3}).config_hash() != cfg.config_hash()


def test_config_stack_order_enforced():
    with pytest.raises(ConfigError):
        TrainConfig(**{**SMALL, "ca": False, "gu": True})
    with pytest.raises(ConfigError):
        TrainConfig(**{**SMALL, "gu": False, "sa": True})


def test_config_text_anchor_enforced_at_model_build():
    cfg = TrainConfig(**{**SMALL, "use_text": False, "cfa": False, "ca": False,
                         "gu": False, "sa": False})
    with pytest.raises(ConfigError):
        KomeiModel(cfg, ["a", "b"], text_tokens=["x"])
    KomeiModel(cfg, ["a", "b"], text_tokens=["x"], _allow_no_text=True)


# -- training -----------------------------------------------------------------------

def test_training_is_deterministic(tiny_data):
    r1, _ = _train(tiny_data)
    r2, _ = _train(tiny_data)
    t1, t2 = r1.model.named_tensors(), r2.model.named_tensors()
    assert set(t1) == set(t2)
    for name in t1:
        assert np.array_equal(t1[name], t2[name]), name


def test_training_seed_changes_result(tiny_data):
    r1, _ = _train(tiny_data, seed=0)
    r2, _ = _train(tiny_data, seed=1)
    diffs = [n for n in r1.model.named_tensors()
             if not np.array_equal(r1.model.named_tensors()[n],
                                   r2.model.named_tensors()[n])]
    assert diffs


def test_zero_epochs_returns_initial_model(tiny_data):
    data, train_s, val_s = tiny_data
    cfg = TrainConfig(**{**SMALL, "epochs": 0})
    result = train(cfg, train_s, val_s, data.tables, data.categories)
    fresh = KomeiModel(cfg, data.categories,
                       text_tokens=[t for s in train_s for t in s.tokens])
    got, want = result.model.named_tensors(), fresh.named_tensors()
    assert set(got) == set(want)
    for name in got:
        assert np.array_equal(got[name], want[name]), name
    assert result.loss_curve == []


def test_loss_curve_structure(tiny_data):
    result, _ = _train(tiny_data)
    assert result.loss_curve
    steps = [row[0] for row in result.loss_curve]
    assert steps == list(range(1, len(steps) + 1))
    for _, l_p, l_ti, l_ts, j in result.loss_curve:
        assert j > 0 and l_p > 0 and l_ti >= 0 and l_ts >= 0


def test_training_decreases_loss():
    data = synth.generate("overfit", n_samples=60, n_categories=3,
                          vocab_size=9, dim=8, seed=1)
    train_s, val_s = split(data.samples, ratio=0.8, seed=1)
    cfg = TrainConfig(**{**SMALL, "epochs": 30, "lr": 5e-3, "weight_decay": 0.0,
                         "seed": 1, "patience": 30})
    result = train(cfg, train_s, val_s, data.tables, data.categories)
    first = np.mean([r[4] for r in result.loss_curve[:3]])
    last = np.mean([r[4] for r in result.loss_curve[-3:]])
    assert last < first


def test_empty_training_set_rejected(tiny_data):
    data, _, _ = tiny_data
    with pytest.raises(CorpusError):
        train(TrainConfig(**SMALL), [], [], data.tables, data.categories)


def test_frozen_evidence_tables_unchanged_by_training(tiny_data):
    data, train_s, val_s = tiny_data
    before = {m: {k: v.copy() for k, v in t.entries.items()}
              for m, t in data.tables.items()}
    _train(tiny_data)
    for modality, table in data.tables.items():
        for key, vecs in table.entries.items():
            assert np.array_equal(vecs, before[modality][key])


def test_missing_media_key_without_fallback(tiny_data):
    data, train_s, val_s = tiny_data
    cfg = TrainConfig(**{**SMALL, "toy_fallback": False})
    with pytest.raises(DataError, match="media keys"):
        train(cfg, train_s, val_s, {"image": data.tables["image"]},
              data.categories)


# -- evaluation ------------------------------------------------------------------

def test_evaluate_report_fields(tiny_data):
    result, data = _train(tiny_data)
    report = evaluate(result.model, data.samples, data.tables)
    assert report.sample_count == len(data.samples)
    assert set(report.acc_at) == {1, 2, 3}
    assert report.acc_at[1] <= report.acc_at[2] <= report.acc_at[3]
    assert sum(report.per_category_hits.values()) == round(
        report.acc_at[1] * report.sample_count)
    d = report.as_dict()
    assert set(d) == {"acc1", "acc2", "acc3", "n", "config_hash"}
    assert d["config_hash"] == result.model.config.config_hash()


def test_evaluate_rejects_empty_or_unlabeled(tiny_data):
    result, data = _train(tiny_data)
    with pytest.raises(CorpusError):
        evaluate(result.model, [], data.tables)
    import dataclasses
    unlabeled = [dataclasses.replace(data.samples[0], label=None)]
    with pytest.raises(DataError):
        evaluate(result.model, unlabeled, data.tables)


def test_predictions_csv(tmp_path, tiny_data):
    result, data = _train(tiny_data)
    path = tmp_path / "preds.csv"
    predictions_csv(result.model, data.samples[:5], data.tables, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "id,gold,pred1,p1,pred2,p2,pred3,p3"
    assert len(lines) == 6
    first = lines[1].split(",")
    assert first[0] == data.samples[0].id
    assert float(first[3]) >= float(first[5]) >= float(first[7])


def test_dump_fused_features_shape_and_determinism(tmp_path, tiny_data):
    result, data = _train(tiny_data)
    p1, p2 = tmp_path / "f1.csv", tmp_path / "f2.csv"
    dump_fused_features(result.model, data.samples[:4], data.tables, p1)
    dump_fused_features(result.model, data.samples[:4], data.tables, p2)
    assert p1.read_bytes() == p2.read_bytes()
    lines = p1.read_text().strip().splitlines()
    d_g = result.model.config.d_g
    assert lines[0].split(",") == ["id", "label"] + [f"h{i}" for i in range(d_g)]
    assert len(lines) == 5
    assert all(len(l.split(",")) == 2 + d_g for l in lines[1:])


def test_write_loss_curve(tmp_path, tiny_data):
    result, _ = _train(tiny_data)
    path = tmp_path / "curve.csv"
    write_loss_curve(result.loss_curve, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "step,l_p,l_ti,l_ts,j"
    assert len(lines) == len(result.loss_curve) + 1


# -- checkpoints -----------------------------------------------------------------

def test_checkpoint_round_trip_bitwise(tmp_path, tiny_data):
    result, data = _train(tiny_data)
    path = tmp_path / "model.komc"
    save_checkpoint(result.model, path)
    back = load_checkpoint(path)
    t_orig, t_back = result.model.named_tensors(), back.named_tensors()
    assert set(t_orig) == set(t_back)
    for name in t_orig:
        assert np.array_equal(t_orig[name], t_back[name]), name
    assert back.config == result.model.config
    assert back.categories == result.model.categories
    assert back.text.vocab == result.model.text.vocab
    # identical predictions after reload
    a = evaluate(result.model, data.samples, data.tables)
    b = evaluate(back, data.samples, data.tables)
    assert a.acc_at == b.acc_at


def test_checkpoint_resave_is_byte_identical(tmp_path, tiny_data):
    result, _ = _train(tiny_data)
    p1, p2 = tmp_path / "a.komc", tmp_path / "b.komc"
    save_checkpoint(result.model, p1)
    save_checkpoint(load_checkpoint(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.komc"
    path.write_bytes(b"XXXX" + b"\x00" * 20)
    with pytest.raises(FormatError):
        load_checkpoint(path)


# -- ablation harnesses --------------------------------------------------------------

@pytest.fixture(scope="module")
def ablation_rows(tiny_data):
    data, train_s, val_s = tiny_data
    cfg = TrainConfig(**{**SMALL, "epochs": 1})
    modality = ablate_modalities(cfg, train_s, val_s, data.samples,
                                 data.tables, data.categories)
    component = ablate_components(cfg, train_s, val_s, data.samples,
                                  data.tables, data.categories)
    return modality, component


def test_modality_ablation_rows(ablation_rows):
    modality, _ = ablation_rows
    names = [n for n, _ in modality]
    assert names == ["T", "V", "A", "T+V", "T+A", "T+V+A"]
    assert all(rep is not None for _, rep in modality)
    assert all(rep.sample_count > 0 for _, rep in modality)


def test_modality_ablation_skips_imageless_domain(tiny_data):
    data, train_s, val_s = tiny_data
    cfg = TrainConfig(**{**SMALL, "epochs": 1})
    rows = ablate_modalities(cfg, train_s, val_s, data.samples, data.tables,
                             data.categories, domain_has_images=False)
    by_name = dict(rows)
    assert by_name["V"] is None and by_name["T+V"] is None
    assert by_name["T+V+A"] is None
    assert by_name["T"] is not None and by_name["T+A"] is not None


def test_component_ablation_rows_and_counts(ablation_rows):
    _, component = ablation_rows
    names = [n for n, _, _ in component]
    assert names == ["base", "base+CFA", "base+CFA+CA", "base+CFA+CA+GU",
                     "base+CFA+CA+GU+SA", "full", "AN_NotShare", "AN_Share"]
    counts = {n: sum(c.values()) for n, _, c in component}
    # each added component strictly grows the model
    assert counts["base+CFA+CA"] > counts["base+CFA"]
    assert counts["base+CFA+CA+GU"] > counts["base+CFA+CA"]
    assert counts["base+CFA+CA+GU+SA"] > counts["base+CFA+CA+GU"]
    # alignment loss adds no parameters
    assert counts["base+CFA"] == counts["base"]
    # sharing saves exactly two add-norm gain/bias pairs
    d_g = 8
    assert counts["AN_NotShare"] - counts["AN_Share"] == 4 * d_g
    assert counts["full"] == counts["AN_Share"]
