import json

import numpy as np
import pytest

from covermod.bench import (ExperimentConfig, capacity_histogram, corpus_experiment, naive_pipeline, rows_to_csv,
                            run_pipeline, sixth_order_survey)
from covermod.cli import main
from covermod.corpus import flat_corpus, natural_corpus, noise_corpus, synthetic_corpus, to_gray
from covermod.detectors import DetectionThresholds, detect
from covermod.pixel_store import read_image_file, write_image_file
from covermod.simulate import symmetric_cover

BANDS = DetectionThresholds((-0.03, 0.03), (-0.03, 0.03))


def test_pipeline_on_symmetric_cover():
    cover = symmetric_cover(96, 96, np.random.default_rng(0), scale=1.0)
    res = run_pipeline(cover, "k", config=ExperimentConfig(order=3), thresholds=BANDS)
    assert res.status == "ok"
    assert 0 < res.alpha <= res.capacity_alpha
    assert not res.report.flagged
    # the recorded report is what a fresh analysis of the stego finds
    again = detect(res.stego, BANDS)
    assert again.spa_alpha == res.report.spa_alpha
    assert len(res.rows) == 1 and res.rows[0].status == "ok"


def test_pipeline_zero_capacity():
    flat = np.full((24, 24, 1), 8, dtype=np.uint8)
    res = run_pipeline(flat, "k", config=ExperimentConfig(order=2))
    assert res.status == "zero-capacity" and res.stego is None


def test_naive_pipeline_flagged(photo_gray):
    res = naive_pipeline(photo_gray, 0.5, BANDS, seed=1)
    assert any(res.report.spa_flagged)


def test_capacity_histogram():
    hist = capacity_histogram([0.005, 0.015, 0.019, 0.2])
    assert hist[0] == (0.0, 0.01, 1)
    assert hist[1] == (0.01, 0.02, 2)
    assert sum(n for _, _, n in hist) == 4
    assert capacity_histogram([]) == []


def test_corpus_experiment_outputs(tmp_path):
    cfg = ExperimentConfig(corpus="synthetic", n_images=6, size=64, order=2, detectors=("spa",), output_dir=str(tmp_path / "a"))
    res = corpus_experiment(cfg, BANDS)
    assert res.summary["images"] == len(res.rows) == 6
    for name in ("rows.csv", "capacity_histogram.csv", "summary.json", "thresholds.json"):
        assert (tmp_path / "a" / name).exists()
    cfg.output_dir = str(tmp_path / "b")
    corpus_experiment(cfg, BANDS)
    assert (tmp_path / "a" / "rows.csv").read_bytes() == (tmp_path / "b" / "rows.csv").read_bytes()
    text = rows_to_csv(res.rows)
    assert text.splitlines()[0] == "# covermod rows v1"


def test_config_json():
    cfg = ExperimentConfig.from_json(json.dumps({"order": 2, "detectors": ["spa"], "n_images": 3}))
    assert cfg.order == 2 and cfg.detectors == ("spa",) and cfg.n_images == 3


def test_corpora():
    syn = synthetic_corpus(3, 32, seed=1)
    assert [c.name for c in syn] == ["synthetic_0000", "synthetic_0001", "synthetic_0002"]
    assert syn[0].grid.shape == (32, 32, 1)
    assert np.ptp(flat_corpus(1, 8)[0].grid) == 0
    assert to_gray(np.array([[[255, 255, 255]]], dtype=np.uint8))[0, 0, 0] == 255


def test_natural_corpus_is_deterministic():
    pytest.importorskip("skimage")
    a = natural_corpus(12, 96)
    b = natural_corpus(12, 96)
    assert [c.name for c in a] == [c.name for c in b]
    assert len({c.name.rsplit("_r", 1)[0] for c in a}) == 11
    assert all(c.grid.shape == (96, 96, 1) for c in a)


def test_sixth_order_survey():
    flat = sixth_order_survey(flat_corpus(4, 36))
    assert flat["blocked_fraction"] == 1.0 and flat["capacity_max"] == 0.0
    assert flat["per_image"][0]["usable_keys"] == 0
    noise = sixth_order_survey(noise_corpus(3, 36))
    assert noise["blocked_fraction"] == 1.0 and noise["below_0.1pct"] == 1.0


# --------------------------------------------------------------------------
# command line


@pytest.fixture
def cover_file(tmp_path):
    p = tmp_path / "cover.pgm"
    write_image_file(p, symmetric_cover(96, 96, np.random.default_rng(5), scale=1.0))
    return p


def test_cli_analyze(cover_file, tmp_path, capsys):
    th = tmp_path / "th.json"
    th.write_text(BANDS.to_json())
    assert main(["analyze", str(cover_file), "--thresholds", str(th)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["flagged"] is False
    assert set(doc["channels"][0]) == {"channel", "spa_alpha", "triples_alpha", "chi2_p", "flagged"}


def test_cli_modify_embed_extract(cover_file, tmp_path):
    mod, plan, stego = tmp_path / "mod.png", tmp_path / "plan.json", tmp_path / "stego.png"
    msg, out = tmp_path / "msg.bin", tmp_path / "out.bin"
    msg.write_bytes(b"meet me by the old oak")
    assert main(["modify", str(cover_file), "-o", str(mod), "--plan", str(plan), "--order", "3"]) == 0
    doc = json.loads(plan.read_text())
    assert doc["order"] == 3 and 0 < doc["alpha"] <= 0.99
    assert main(["embed", str(mod), "--key", "pw", "--message", str(msg), "--plan", str(plan),
                 "-o", str(stego)]) == 0
    assert main(["extract", str(stego), "--key", "pw", "-o", str(out)]) == 0
    assert out.read_bytes() == msg.read_bytes()
    assert main(["extract", str(stego), "--key", "nope"]) == 3
    assert np.abs(read_image_file(stego).astype(int) - read_image_file(cover_file)).max() <= 1


def test_cli_key_file(cover_file, tmp_path):
    key, msg, stego = tmp_path / "key.bin", tmp_path / "m", tmp_path / "s.pgm"
    key.write_bytes(b"\x01\x02\x03")
    msg.write_bytes(b"hi")
    assert main(["embed", str(cover_file), "--key-file", str(key), "--message", str(msg),
                 "--order", "2", "-o", str(stego)]) == 0
    out = tmp_path / "o"
    assert main(["extract", str(stego), "--key-file", str(key), "--order", "2", "-o", str(out)]) == 0
    assert out.read_bytes() == b"hi"


def test_cli_embed_too_long(cover_file, tmp_path):
    msg = tmp_path / "big"
    msg.write_bytes(bytes(100000))
    assert main(["embed", str(cover_file), "--key", "k", "--message", str(msg), "-o", str(tmp_path / "x.pgm")]) == 2


def test_cli_calibrate(tmp_path):
    out = tmp_path / "th.json"
    assert main(["calibrate", "--corpus", "synthetic", "--n-images", "100", "--size", "24", "-o", str(out)]) == 0
    th = DetectionThresholds.from_json(out.read_text())
    assert abs(th.spa[0]) < 1e-6
    assert main(["calibrate", "--corpus", "synthetic", "--n-images", "5", "--size", "24"]) == 2


def test_cli_bench(tmp_path, monkeypatch):
    th = tmp_path / "th.json"
    th.write_text(BANDS.to_json())
    monkeypatch.setenv("COVERMOD_CORPUS", "synthetic")
    out = tmp_path / "run"
    assert main(["bench", "--n-images", "4", "--size", "48", "--order", "2", "--detectors", "spa", "--thresholds", str(th),
                 "-o", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["images"] == 4 and summary["config"]["corpus"] == "synthetic"


def test_cli_bench_directory_corpus(tmp_path):
    d = tmp_path / "covers"
    d.mkdir()
    rng = np.random.default_rng(0)
    for i in range(3):
        write_image_file(d / f"c{i}.png", symmetric_cover(48, 48, rng, scale=1.0))
    (d / "broken.pgm").write_bytes(b"P5\n4 4\n255\n\x00")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"corpus": str(d), "order": 3, "screen": False}))
    th = tmp_path / "th.json"
    th.write_text(BANDS.to_json())
    out = tmp_path / "run"
    assert main(["bench", "--config", str(cfg), "--thresholds", str(th), "-o", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["images"] == 3 and summary["excluded"] == 1


def test_cli_survey6(capsys):
    assert main(["survey6", "--corpus", "flat", "--n-images", "3", "--size", "24"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["images"] == 3 and "per_image" not in doc
