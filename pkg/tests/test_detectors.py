import numpy as np
import pytest

from covermod.detectors import (DegenerateCensusError, DetectionThresholds, calibrate_thresholds, channel_census,
                                detect, histogram_chi2, image_estimates, signed_max, spa_estimate,
                                symmetry_objective, triples_estimate)
from covermod.simulate import lsb_embed, symmetric_cover
from covermod.trace_algebra import census


def test_symmetric_cover_reads_zero(smooth_gray):
    est = image_estimates(smooth_gray)
    assert est["spa"][0] == pytest.approx(0.0, abs=1e-6)
    assert est["triples"][0] == pytest.approx(0.0, abs=1e-6)
    assert spa_estimate(channel_census(smooth_gray, 0, 2)).residual == pytest.approx(0.0, abs=1e-9)


def test_spa_tracks_rate():
    rng = np.random.default_rng(3)
    cover = symmetric_cover(256, 256, rng)
    for alpha in (0.2, 0.5):
        stego = lsb_embed(cover, alpha, rng)
        assert spa_estimate(channel_census(stego, 0, 2)).alpha_hat == pytest.approx(alpha, abs=0.06)


def test_triples_tracks_low_rate():
    rng = np.random.default_rng(4)
    cover = symmetric_cover(384, 384, rng)
    stego = lsb_embed(cover, 0.1, rng)
    assert triples_estimate(channel_census(stego, 0, 3)).alpha_hat == pytest.approx(0.1, abs=0.05)


def test_full_embedding_reads_near_one():
    rng = np.random.default_rng(5)
    stego = lsb_embed(symmetric_cover(384, 384, rng), 1.0, rng)
    assert spa_estimate(channel_census(stego, 0, 2)).alpha_hat == pytest.approx(1.0, abs=0.1)


def test_objective_smallest_near_truth():
    rng = np.random.default_rng(6)
    stego = lsb_embed(symmetric_cover(256, 256, rng), 0.4, rng)
    cen = channel_census(stego, 0, 2)
    vals = symmetry_objective(cen, [0.2, 0.4, 0.6])
    assert vals[1] < vals[0] and vals[1] < vals[2]


def test_degenerate_and_wrong_order():
    flat = census(np.tile([0, 200], (50, 1)))
    with pytest.raises(DegenerateCensusError):
        spa_estimate(flat)
    with pytest.raises(ValueError):
        triples_estimate(flat)
    with pytest.raises(ValueError):
        spa_estimate(census(np.full((50, 3), 100)))


def test_chi2_attack():
    even = np.repeat(np.arange(0, 256, 2), 10).astype(np.uint8)
    evened = np.concatenate([even, even + 1])
    stat, p = histogram_chi2(evened)
    assert stat == 0.0 and p == 1.0
    stat, p = histogram_chi2(even)
    assert p < 1e-6
    assert histogram_chi2(np.zeros(0, dtype=np.uint8)) == (0.0, 1.0)


def test_signed_max():
    assert signed_max([0.1, -0.3, 0.2]) == -0.3


def test_thresholds_json():
    th = DetectionThresholds((-0.05, 0.07), (-0.02, 0.1))
    assert DetectionThresholds.from_json(th.to_json()) == th


def test_calibration_needs_enough_covers():
    with pytest.raises(ValueError):
        calibrate_thresholds([{"spa": [0.0], "triples": [0.0]}] * 10)


def test_calibration_percentiles():
    est = [{"spa": [v], "triples": [-v]} for v in np.linspace(-1, 1, 201)]
    th = calibrate_thresholds(est)
    assert th.spa == pytest.approx((-0.95, 0.95))
    assert th.triples == pytest.approx((-0.95, 0.95))


def test_calibration_on_symmetric_covers_collapses():
    rng = np.random.default_rng(1)
    covers = [symmetric_cover(24, 48, rng, scale=1.0) for _ in range(100)]
    th = calibrate_thresholds(covers)
    assert max(map(abs, th.spa + th.triples)) < 1e-6


def test_detect_flags_outside_band(photo_gray):
    th = DetectionThresholds((-0.05, 0.05), (-0.05, 0.05))
    rep = detect(photo_gray, th, estimates={"spa": [0.2], "triples": [-0.2]})
    assert rep.spa_flagged == [True] and rep.triples_flagged == [True] and rep.flagged
    rep = detect(photo_gray, th, estimates={"spa": [0.0], "triples": [0.01]})
    assert not rep.flagged
    assert not detect(photo_gray).flagged


def test_detect_naive_embedding(photo_gray):
    rng = np.random.default_rng(0)
    th = DetectionThresholds((-0.05, 0.05), (-0.05, 0.05))
    stego = lsb_embed(photo_gray, 0.4, rng)
    rep = detect(stego, th)
    assert rep.spa_flagged == [True]
    assert rep.rows()[0]["flagged"]


def test_detect_color_channels(photo_rgb):
    rep = detect(photo_rgb)
    assert len(rep.spa_alpha) == 3 and rep.channels == [0, 1, 2]
    d = rep.to_dict()
    assert d["flagged"] is False
