import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import butter, sosfilt

from longform_bench import dsp, synth
from longform_bench.corpus import CorpusManifest, UtteranceRecord
from longform_bench.screening import (
    ScreeningConfig,
    SnrEstimate,
    VadError,
    build_subsets,
    calibrate_threshold,
    calibration_pairs,
    estimate_snr,
    snr_db_from_powers,
    vad_mask,
)

SR = 16000


def test_vad_silence_then_tone():
    t = np.arange(SR) / SR
    x = np.concatenate([np.zeros(SR), math.sqrt(2) * np.sin(2 * np.pi * 440 * t)])
    mask = vad_mask(x)
    assert len(mask) == dsp.n_frames(2 * SR, 400, 160)
    # frame i reaches the tone once 160 i + 400 > 16000
    ideal = np.arange(len(mask)) >= 98
    disagree = np.flatnonzero(mask != ideal)
    assert np.all(np.abs(disagree - 98) <= 3)


def test_vad_constant_amplitude_all_speech():
    assert vad_mask(np.full(SR, 0.3)).all()


def test_vad_digital_silence_all_nonspeech():
    assert not vad_mask(np.zeros(SR)).any()


def test_vad_too_short():
    with pytest.raises(VadError, match="too short for VAD"):
        vad_mask(np.ones(400 + 8 * 160))


def test_vad_smoother_removes_isolated_frames():
    rng = np.random.default_rng(0)
    x = 0.01 * rng.normal(size=SR)
    x[8000:8100] += 1.0  # a 6 ms click covers at most 3 frames
    mask = vad_mask(x)
    assert mask.sum() <= 3


def test_snr_band_noise_over_steady_noise():
    rng = np.random.default_rng(1)
    n = 2 * SR
    floor = rng.normal(size=n)  # power 1
    band = sosfilt(butter(4, [300, 3000], btype="band", fs=SR, output="sos"), rng.normal(size=SR))
    band *= math.sqrt(10.0) / band.std()
    x = floor.copy()
    x[:SR] += band
    est = estimate_snr(x, "u")
    assert est.snr_db == pytest.approx(10.0, abs=2.0)


def test_snr_floor_at_equal_powers():
    assert snr_db_from_powers(2.0, 2.0) == pytest.approx(-30.0)
    assert snr_db_from_powers(1.0, 2.0) == pytest.approx(-30.0)
    assert snr_db_from_powers(11.0, 1.0) == pytest.approx(10.0)


def test_snr_tone_bursts_over_silence():
    t = np.arange(SR // 4) / SR
    burst = 0.5 * np.sin(2 * np.pi * 300 * t)
    x = np.concatenate([np.zeros(SR // 4), burst, np.zeros(SR // 4), burst, np.zeros(SR // 4)])
    est = estimate_snr(x)
    assert est.snr_db is not None and est.snr_db > 40


def test_snr_undefined_cases():
    short = estimate_snr(np.ones(500), "s")
    assert short.snr_db is None and short.status == "undefined"
    constant = estimate_snr(np.full(SR, 0.2), "c")
    assert constant.snr_db is None and constant.noise_frames == 0


def _mixture(seed=3):
    rng = np.random.default_rng(seed)
    speech, active, _ = synth.synth_speech(rng, synth.SynthSpec().ids, 1.8)
    return synth.mix_at_snr(speech, active, synth.make_noise(rng, "white", len(speech)), 12.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_snr_gain_invariant(gain):
    x = _mixture()
    a = estimate_snr(x).snr_db
    b = estimate_snr(gain * x).snr_db
    assert abs(a - b) < 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_snr_monotone_in_added_noise(seed):
    rng = np.random.default_rng(seed)
    speech, _, _ = synth.synth_speech(rng, synth.SynthSpec().ads, 2.0)
    speech *= 0.3 / np.abs(speech).max()
    noise = np.random.default_rng(100 + seed).standard_normal(len(speech))
    values = [estimate_snr(speech + s * noise).snr_db for s in np.geomspace(1e-4, 0.3, 12)]
    defined = [v for v in values if v is not None]
    # once the estimate becomes undefined (no noise contrast) it stays so
    assert values[: len(defined)] == defined
    assert len(defined) >= 8
    assert all(b <= a for a, b in zip(defined, defined[1:]))


def test_calibration_separable():
    pairs = [(15, "good"), (16, "good"), (18, "good"), (5, "bad"), (8, "medium"), (14, "bad")]
    res = calibrate_threshold(pairs)
    assert res.threshold_db == 14.5
    assert res.youden_j == 1.0
    assert (res.n_good, res.n_rest) == (3, 3)


def test_calibration_interleaved():
    pairs = [(1, "good"), (2, "bad"), (3, "good"), (4, "bad"), (5, "good"), (6, "bad")]
    res = calibrate_threshold(pairs)
    assert res.youden_j == 0.0
    assert res.threshold_db == -math.inf  # J = 0 is first reached at the lowest cut
    pairs = [(1, "good"), (1, "bad"), (3, "good"), (3, "bad")]
    res = calibrate_threshold(pairs)
    assert res.youden_j == 0.0
    assert res.threshold_db == -math.inf


def test_calibration_prefers_lower_cut_on_ties():
    # cuts 2.5 and 4.5 both give J = 0.5
    pairs = [(1, "bad"), (2, "bad"), (3, "good"), (4, "bad"), (5, "good")]
    assert calibrate_threshold(pairs).threshold_db == 2.5


def test_calibration_needs_both_classes():
    with pytest.raises(ValueError, match="both classes"):
        calibrate_threshold([(3, "good"), (4, "good")])
    with pytest.raises(ValueError):
        calibrate_threshold([(3, "bad")])


def test_calibration_ignores_unlabelled():
    res = calibrate_threshold([(3, "good"), (1, "bad"), (2, None)])
    assert res.threshold_db == 2.0 and res.n_rest == 1


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(-5, 30), st.sampled_from(["good", "medium", "bad"])), min_size=2, max_size=40))
def test_threshold_is_midpoint_or_infinite(pairs):
    labels = {q == "good" for _, q in pairs}
    if labels != {True, False}:
        return
    res = calibrate_threshold(pairs)
    values = sorted({s for s, _ in pairs})
    mids = {(a + b) / 2 for a, b in zip(values, values[1:])}
    assert res.threshold_db in mids | {-math.inf, math.inf}
    assert -1.0 <= res.youden_j <= 1.0


def _labelled_manifest():
    recs = [
        UtteranceRecord("a", "a.wav", 0, 1, "adult_female", "infant", "good"),
        UtteranceRecord("b", "b.wav", 0, 1, "adult_female", "adult", "medium"),
        UtteranceRecord("c", "c.wav", 0, 1, "adult_male", "adult", "bad"),
    ]
    return CorpusManifest("c", tuple(recs))


def _estimates(values):
    return {uid: SnrEstimate(uid, v, 50, 50) for uid, v in values.items()}


def test_build_subsets_example():
    subsets = build_subsets(_labelled_manifest(), _estimates({"a": 20, "b": 10, "c": 16}), 14.5)
    assert subsets["strict"].utterance_ids == {"a"}
    assert subsets["relaxed"].utterance_ids == {"a", "b"}
    assert subsets["snr"].utterance_ids == {"a", "c"}
    assert "14.50" in subsets["snr"].rule


def test_build_subsets_strictly_above():
    subsets = build_subsets(_labelled_manifest(), _estimates({"a": 14.5, "b": 14.6, "c": None}), 14.5)
    assert subsets["snr"].utterance_ids == {"b"}


def test_all_good_strict_equals_relaxed():
    recs = tuple(UtteranceRecord(u, "x.wav", 0, 1, "adult_male", "adult", "good") for u in "xyz")
    subsets = build_subsets(CorpusManifest("c", recs), _estimates({"x": 1, "y": 2, "z": 3}), 0.0)
    assert subsets["strict"].utterance_ids == subsets["relaxed"].utterance_ids


def test_threshold_above_max_empty():
    subsets = build_subsets(_labelled_manifest(), _estimates({"a": 20, "b": 10, "c": 16}), 99.0)
    assert len(subsets["snr"]) == 0


def test_build_subsets_requires_finite_threshold():
    with pytest.raises(ValueError, match="finite"):
        build_subsets(_labelled_manifest(), {}, math.inf)


def test_calibration_pairs_skip_undefined():
    pairs = calibration_pairs(_labelled_manifest(), _estimates({"a": 20, "b": None, "c": 3}))
    assert pairs == [(20, "good"), (3, "bad")]


def test_config_margin_is_used():
    x = _mixture()
    loose = vad_mask(x, ScreeningConfig(margin_db=1.0)).sum()
    tight = vad_mask(x, ScreeningConfig(margin_db=10.0)).sum()
    assert loose >= tight
