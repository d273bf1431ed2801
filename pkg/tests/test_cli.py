import json

import numpy as np
import pytest

from etckit import blocks
from etckit.cli import dispatch
from etckit.keying import load_key_file
from etckit.synthdata import make_photo_corpus


@pytest.fixture()
def keyfile(tmp_path):
    path = tmp_path / "k.txt"
    assert dispatch(["keygen", str(path), "--from-seeds", "1,2,3,4"]) == 0
    return path


@pytest.fixture()
def fixture_image(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "in.png"
    blocks.save_png(path, rng.integers(0, 256, (48, 64, 3), dtype=np.uint8))
    return path


def test_keygen_writes_parseable_key(tmp_path):
    out = tmp_path / "key.txt"
    assert dispatch(["keygen", str(out)]) == 0
    key = load_key_file(out)
    assert any(s != 0 for s in key.seeds)


def test_keygen_refuses_overwrite(tmp_path, capsys):
    out = tmp_path / "key.txt"
    assert dispatch(["keygen", str(out)]) == 0
    assert dispatch(["keygen", str(out)]) == 2
    assert "--force" in capsys.readouterr().err
    assert dispatch(["keygen", str(out), "--force"]) == 0


def test_keygen_from_seeds_golden(tmp_path):
    out = tmp_path / "key.txt"
    assert dispatch(["keygen", str(out), "--from-seeds", "1,2,3,4"]) == 0
    assert out.read_text() == (
        "K1=0000000000000001\n"
        "K2=0000000000000002\n"
        "K3=0000000000000003\n"
        "K4=0000000000000004\n"
    )


def test_keygen_never_emits_all_zero(tmp_path):
    out = tmp_path / "key.txt"
    assert dispatch(["keygen", str(out), "--from-seeds", "0,0,0,0"]) == 2
    assert not out.exists()


def test_keygen_distinct_keys(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    dispatch(["keygen", str(a)])
    dispatch(["keygen", str(b)])
    assert a.read_text() != b.read_text()


def test_encrypt_decrypt_round_trip(tmp_path, keyfile, fixture_image):
    enc = tmp_path / "enc.png"
    dec = tmp_path / "dec.png"
    assert dispatch(["encrypt", "--key", str(keyfile), str(fixture_image), str(enc)]) == 0
    assert dispatch(["decrypt", "--key", str(keyfile), str(enc), str(dec)]) == 0
    assert dec.read_bytes() == fixture_image.read_bytes()
    assert not np.array_equal(blocks.load_image(enc), blocks.load_image(fixture_image))


def test_encrypt_idempotent(tmp_path, keyfile, fixture_image):
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    dispatch(["encrypt", "--key", str(keyfile), str(fixture_image), str(a)])
    dispatch(["encrypt", "--key", str(keyfile), str(fixture_image), str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_encrypt_respects_mode_and_steps(tmp_path, keyfile, fixture_image):
    out = tmp_path / "out.png"
    assert dispatch([
        "encrypt", "--key", str(keyfile), "--mode", "uniform",
        "--steps", "scramble,negpos", str(fixture_image), str(out),
    ]) == 0
    dec = tmp_path / "dec.png"
    assert dispatch([
        "decrypt", "--key", str(keyfile), "--mode", "uniform",
        "--steps", "scramble,negpos", str(out), str(dec),
    ]) == 0
    assert np.array_equal(blocks.load_image(dec), blocks.load_image(fixture_image))


def test_encrypt_directory_preserves_relative_paths(tmp_path, keyfile):
    src = tmp_path / "src"
    (src / "sub").mkdir(parents=True)
    rng = np.random.default_rng(1)
    blocks.save_png(src / "a.png", rng.integers(0, 256, (32, 32, 3), dtype=np.uint8))
    blocks.save_png(src / "sub" / "b.png", rng.integers(0, 256, (32, 32, 3), dtype=np.uint8))
    dst = tmp_path / "dst"
    assert dispatch(["encrypt", "--key", str(keyfile), str(src), str(dst)]) == 0
    assert (dst / "a.png").exists() and (dst / "sub" / "b.png").exists()

    back = tmp_path / "back"
    assert dispatch(["decrypt", "--key", str(keyfile), str(dst), str(back)]) == 0
    assert np.array_equal(blocks.load_image(back / "sub" / "b.png"),
                          blocks.load_image(src / "sub" / "b.png"))


def test_encrypt_center_crop(tmp_path, keyfile):
    rng = np.random.default_rng(2)
    src = tmp_path / "odd.png"
    blocks.save_png(src, rng.integers(0, 256, (50, 70, 3), dtype=np.uint8))
    out = tmp_path / "out.png"
    assert dispatch(["encrypt", "--key", str(keyfile), str(src), str(out)]) == 2
    assert dispatch(["encrypt", "--key", str(keyfile), "--center-crop", str(src), str(out)]) == 0
    assert blocks.load_image(out).shape == (48, 64, 3)


def test_embed_check_passes_in_uniform_mode(keyfile, fixture_image, capsys):
    code = dispatch([
        "embed-check", "--key", str(keyfile), "--trials", "3", "--dim", "8",
        str(fixture_image),
    ])
    assert code == 0
    assert "PASS" in capsys.readouterr().out


def test_embed_check_per_block_mode_is_usage_error(keyfile, fixture_image, capsys):
    code = dispatch([
        "embed-check", "--key", str(keyfile), "--mode", "per-block",
        "--trials", "1", str(fixture_image),
    ])
    assert code == 2
    assert "uniform" in capsys.readouterr().err


def test_embed_check_impossible_tolerance_fails_with_exit_1(keyfile, fixture_image, capsys):
    code = dispatch([
        "embed-check", "--key", str(keyfile), "--trials", "3", "--dim", "8",
        "--tolerance", "1e-30", str(fixture_image),
    ])
    assert code == 1
    assert "FAIL" in capsys.readouterr().out


def test_embed_check_json_and_matrix_dump(tmp_path, keyfile, fixture_image, capsys):
    dump = tmp_path / "mats"
    code = dispatch([
        "embed-check", "--key", str(keyfile), "--trials", "2", "--dim", "8",
        "--json-lines", "--dump-matrices", str(dump), str(fixture_image),
    ])
    assert code == 0
    rec = json.loads(capsys.readouterr().out.strip())
    assert rec["pass"] is True and rec["max_deviation"] < 1e-9
    e1 = np.loadtxt(dump / "position_permutation.txt")
    assert e1.shape == (12, 12)
    e2 = np.loadtxt(dump / "block_transform.txt")
    assert e2.shape == (768, 768)


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_corpus")
    make_photo_corpus(root, 6, sizes=((96, 96),), seed=11)
    return root


def test_report_compression_cli(small_corpus, keyfile, capsys):
    assert dispatch([
        "report", "compression", "--corpus", str(small_corpus),
        "--key", str(keyfile), "--qf", "85,80",
    ]) == 0
    out = capsys.readouterr().out
    assert "qf85" in out and "ratio" in out


def test_report_compression_json_lines(small_corpus, keyfile, capsys):
    assert dispatch([
        "report", "compression", "--corpus", str(small_corpus),
        "--key", str(keyfile), "--qf", "85", "--json-lines", "--threads", "2",
    ]) == 0
    lines = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    kinds = [l["record"] for l in lines]
    assert kinds[0] == "header" and kinds[-2:] == ["totals", "ratios"]
    assert kinds.count("image") == 6
    ratios = lines[-1]
    assert 0.9 < ratios["qf85"] < 1.15


def test_report_leakage_cli(small_corpus, keyfile, capsys):
    assert dispatch([
        "report", "leakage", "--corpus", str(small_corpus),
        "--key", str(keyfile), "--json-lines",
    ]) == 0
    lines = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    summary = lines[-1]
    assert summary["record"] == "summary"
    assert summary["median"] < 0.2


def test_report_empty_corpus_is_usage_error(tmp_path, keyfile, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert dispatch([
        "report", "leakage", "--corpus", str(empty), "--key", str(keyfile),
    ]) == 2


def test_probe_cli_synthetic(keyfile, capsys):
    code = dispatch([
        "probe", "--key", str(keyfile), "--synthetic", "48",
        "--dim", "16", "--epochs", "20", "--json-lines",
    ])
    assert code == 0
    lines = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    parity = lines[-1]
    assert parity["record"] == "parity"
    assert parity["acc_adapted"] == parity["acc_plain"]
    assert parity["feature_deviation"] < 1e-9


def test_probe_cli_requires_exactly_one_source(keyfile, capsys):
    assert dispatch(["probe", "--key", str(keyfile)]) == 2
    assert dispatch([
        "probe", "--key", str(keyfile), "--synthetic", "48", "--corpus", "x",
    ]) == 2


def test_probe_cli_class_directory_corpus(tmp_path, keyfile, capsys):
    rng = np.random.default_rng(30)
    for cls in ("left", "right"):
        (tmp_path / "data" / cls).mkdir(parents=True)
        for i in range(8):
            img = rng.integers(0, 60, (32, 32, 3), dtype=np.uint8)
            half = slice(None, 16) if cls == "left" else slice(16, None)
            img[:, half] = rng.integers(180, 256, 3, dtype=np.uint8)
            blocks.save_png(tmp_path / "data" / cls / f"{i}.png", img)
    code = dispatch([
        "probe", "--key", str(keyfile), "--corpus", str(tmp_path / "data"),
        "--dim", "8", "--epochs", "40", "--json-lines",
    ])
    assert code == 0
    parity = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert parity["acc_adapted"] == parity["acc_plain"]


def test_unknown_flag_exits_2(capsys):
    assert dispatch(["encrypt", "--bogus"]) == 2


def test_missing_key_file_exits_2(fixture_image, tmp_path, capsys):
    assert dispatch([
        "encrypt", "--key", str(tmp_path / "nope.txt"),
        str(fixture_image), str(tmp_path / "o.png"),
    ]) == 2
