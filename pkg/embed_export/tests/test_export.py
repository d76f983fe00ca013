import json

from embed_export import ExportManifest, export
from embed_export.cli import run


def manifest_for(media, out_dir, **overrides):
    obj = {
        "keywords": {kw: {"images": m["images"], "audio": m["audio"]}
                     for kw, m in media.items()},
        "image_dim": 16,
        "speech_dim": 16,
        "image_out": str(out_dir / "images.kome"),
        "speech_out": str(out_dir / "speech.kome"),
        "preprocessing": {"image_resize": "32x32 bilinear",
                          "audio": "16-bit PCM, full-clip spectrum"},
    }
    obj.update(overrides)
    return ExportManifest.from_json(obj)


def test_export_writes_both_modalities(media_dir, tmp_path):
    root, media = media_dir
    result = export(manifest_for(media, tmp_path))
    assert result.ok
    assert set(result.written) == {"image", "speech"}
    assert (tmp_path / "images.kome").exists()
    assert (tmp_path / "speech.kome").exists()


def test_export_deterministic_bytes(media_dir, tmp_path):
    root, media = media_dir
    d1, d2 = tmp_path / "r1", tmp_path / "r2"
    d1.mkdir(), d2.mkdir()
    export(manifest_for(media, d1))
    export(manifest_for(media, d2))
    assert (d1 / "images.kome").read_bytes() == (d2 / "images.kome").read_bytes()
    assert (d1 / "speech.kome").read_bytes() == (d2 / "speech.kome").read_bytes()


def test_export_skips_undecodable_media(media_dir, tmp_path):
    root, media = media_dir
    bad = root / "broken.png"
    bad.write_bytes(b"not a real png file")
    media["ice"]["images"] = media["ice"]["images"][:2] + [str(bad)]
    result = export(manifest_for(media, tmp_path))
    assert not result.ok
    assert len(result.skipped) == 1
    assert "broken.png" in result.skipped[0]
    # the readable images for the keyword were still exported
    assert "image" in result.written


def test_export_no_tmp_files_left(media_dir, tmp_path):
    root, media = media_dir
    export(manifest_for(media, tmp_path))
    leftovers = list(tmp_path.glob("*.tmp"))
    assert leftovers == []


def test_cli_success(media_dir, tmp_path, capsys):
    root, media = media_dir
    mpath = tmp_path / "manifest.json"
    obj = {
        "keywords": {kw: {"images": m["images"], "audio": m["audio"]}
                     for kw, m in media.items()},
        "image_dim": 16, "speech_dim": 16,
        "image_out": str(tmp_path / "images.kome"),
        "speech_out": str(tmp_path / "speech.kome"),
    }
    mpath.write_text(json.dumps(obj))
    assert run(["--manifest", str(mpath)]) == 0
    out = capsys.readouterr().out
    assert "wrote image table" in out and "wrote speech table" in out


def test_cli_missing_media_is_data_error(media_dir, tmp_path, capsys):
    root, media = media_dir
    obj = {
        "keywords": {"ice": {"images": [str(root / "gone.png")]}},
        "image_dim": 16,
        "image_out": str(tmp_path / "images.kome"),
    }
    mpath = tmp_path / "manifest.json"
    mpath.write_text(json.dumps(obj))
    assert run(["--manifest", str(mpath)]) == 2
    assert "gone.png" in capsys.readouterr().err


def test_cli_skipped_media_exit_code(media_dir, tmp_path, capsys):
    root, media = media_dir
    bad = root / "broken.wav"
    bad.write_bytes(b"RIFFnope")
    obj = {
        "keywords": {
            "ice": {"images": media["ice"]["images"], "audio": str(bad)},
        },
        "image_dim": 16, "speech_dim": 16,
        "image_out": str(tmp_path / "images.kome"),
        "speech_out": str(tmp_path / "speech.kome"),
    }
    mpath = tmp_path / "manifest.json"
    mpath.write_text(json.dumps(obj))
    assert run(["--manifest", str(mpath)]) == 4
    assert "broken.wav" in capsys.readouterr().err


def test_cli_usage_error():
    assert run([]) == 1
