import json

import numpy as np
import pytest

from gbsval import cli
from gbsval import io as gio
from gbsval.gaussian import SqueezingSpec, haar_unitary, output_state
from gbsval.oracle import enumerate_ideal
from gbsval.samplers import sample_ideal

TINY = {
    "model": "loss",
    "spec": {"K": 3, "m": 3, "r": 0.4},
    "eta": [1.0, 0.9],
    "seed": 5,
    "sampling": {"n_samples": 300, "bona_samples": 500, "n_cutoff": 3},
    "validation": {"k": 8, "n_train": 200, "repetitions": 50, "draw_size": 150},
    "enumerate": {"k": 5, "partitions": [None, "1,2|3"]},
}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps(TINY))
    return p


def test_interferometer_roundtrip(tmp_path):
    itf = haar_unitary(4, 3)
    p = gio.save_interferometer(itf, tmp_path / "u.json")
    back = gio.load_interferometer(p)
    assert np.array_equal(back.T, itf.T) and back.seed == 3


def test_table_and_samples_roundtrip(tmp_path):
    spec, itf = SqueezingSpec(2, 2, 0.3), haar_unitary(2, 1)
    t = enumerate_ideal(output_state(spec, itf), 2)
    back, head = gio.load_table(gio.save_table(t, tmp_path / "t.ndjson", {"x": 1}))
    assert np.array_equal(back.probs, t.probs) and head["x"] == 1
    s = sample_ideal(spec, itf, 20, 2, seed=1)
    sb, _ = gio.load_samples(gio.save_samples(s, tmp_path / "s.ndjson"))
    assert np.array_equal(sb.patterns, s.patterns) and sb.params == s.params


def test_bad_files(tmp_path):
    p = tmp_path / "bad.ndjson"
    p.write_text("{not json")
    with pytest.raises(gio.FileFormatError):
        gio.load_samples(p)
    p.write_text('{"type": "probability_table"}\n')
    with pytest.raises(gio.FileFormatError):
        gio.load_samples(p)
    with pytest.raises(gio.FileFormatError):
        gio.load_json(tmp_path / "missing.json")


def test_config_hash_is_canonical():
    assert gio.config_hash({"a": 1, "b": 2}) == gio.config_hash({"b": 2, "a": 1})
    assert gio.config_hash({"a": 1}) != gio.config_hash({"a": 2})


def test_presets_load():
    for name in ["loss_small", "dist_small", "loss_binned", "corr_loss", "mockup_thermal", "dist_structure"]:
        cfg = cli.load_config(name)
        assert cfg["name"] == name


def test_full_pipeline(tmp_path, cfg_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["generate-unitary", "--m", "3", "--seed", "2", "--out", str(out / "u.json")]) == 0
    assert cli.main(["sample", "--config", str(cfg_path), "--unitary", str(out / "u.json"),
                     "--out", str(out / "s")]) == 0
    files = sorted((out / "s").glob("samples_*.ndjson"))
    assert [f.name for f in files] == ["samples_loss_0.9000.ndjson", "samples_loss_1.0000.ndjson"]
    _, head = gio.load_samples(files[0])
    assert head["config_hash"] == gio.config_hash(TINY) and "unitary_hash" in head
    assert cli.main(["enumerate", "--config", str(cfg_path), "--out", str(out / "e")]) == 0
    assert len(list((out / "e").glob("stats_*.json"))) == 4
    assert cli.main(["validate", "--config", str(cfg_path), "--bona", str(out / "s" / "bona.ndjson"),
                     "--test", *map(str, files), "--out", str(out / "v")]) == 0
    assert cli.main(["validate", "--config", str(cfg_path), "--bins", "1,2|3",
                     "--bona", str(out / "s" / "bona.ndjson"), "--test", *map(str, files),
                     "--out", str(out / "vb")]) == 0
    peak = gio.load_json(out / "vb" / "peak_loss_0.9000.json")
    assert peak["partition"] == "1,2|3"
    assert cli.main(["report", "--inputs", *map(str, sorted((out / "v").glob("peak_*.json"))),
                     "--out", str(out / "report.csv")]) == 0
    lines = (out / "report.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[0].startswith("noise,")


def test_correlation_mode(tmp_path, cfg_path):
    cfg = dict(TINY, validation={"mode": "correlation", "t_max": 3})
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    assert cli.main(["sample", "--config", str(p), "--out", str(tmp_path / "s")]) == 0
    tests = sorted(str(f) for f in (tmp_path / "s").glob("samples_*.ndjson"))
    assert cli.main(["validate", "--config", str(p), "--bona", str(tmp_path / "s" / "bona.ndjson"),
                     "--test", *tests, "--out", str(tmp_path / "v")]) == 0
    g = gio.load_json(tmp_path / "v" / "gamma_loss_0.9000.json")["gamma"]
    assert set(g) == {"1", "2", "3"}


def test_rerun_is_byte_identical(tmp_path, cfg_path):
    for d, th in [("a", "1"), ("b", "4")]:
        assert cli.main(["sample", "--config", str(cfg_path), "--out", str(tmp_path / d), "--threads", th]) == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_exit_codes(tmp_path, cfg_path, capsys):
    assert cli.main(["sample", "--config", "no_such_preset", "--out", str(tmp_path)]) == 5
    assert cli.main(["sample", "--config", str(cfg_path), "--eta", "1.5", "--out", str(tmp_path)]) == 2
    big = dict(TINY, spec={"K": 3, "m": 3, "r": 0.4}, sampling={"n_cutoff": 200})
    p = tmp_path / "big.json"
    p.write_text(json.dumps(big))
    assert cli.main(["enumerate", "--config", str(p), "--out", str(tmp_path)]) == 3
    with pytest.raises(SystemExit) as e:
        cli.main(["sample", "--model", "nope", "--config", str(cfg_path), "--out", str(tmp_path)])
    assert e.value.code == 2
    assert "error" in capsys.readouterr().err
