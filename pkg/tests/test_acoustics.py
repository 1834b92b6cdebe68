import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import lfilter

from helpers import add_noise, harmonic, pulse_train
from longform_bench.acoustics import FEATURE_NAMES, batch_features, extract_features, wav_loader
from longform_bench.audio import AudioBuffer, write_wav
from longform_bench.corpus import CorpusManifest, QualitySubset, UtteranceRecord

SR = 16000


def record(uid="u", onset=0.0, offset=1.0, path=None, role="adult_female", addressee="infant"):
    return UtteranceRecord(uid, path or f"{uid}.wav", onset, offset, role, addressee, "good")


def voiced(f0, dur=1.0, seed=0):
    """Pulse train through a fixed two-formant envelope, lightly noisy."""
    x = pulse_train(f0, dur)
    for fc, bw in ((700, 110), (1200, 140)):
        r = math.exp(-math.pi * bw / SR)
        x = lfilter([1 - r], [1, -2 * r * math.cos(2 * math.pi * fc / SR), r * r], x)
    return add_noise(x / np.abs(x).max() * 0.3, 35, seed=seed)


def test_constant_220():
    feats = extract_features(record(), harmonic(220, 1.0))
    assert feats.mean_log_f0 == pytest.approx(math.log(220), abs=0.01)
    assert feats.std_log_f0 < 0.01
    assert feats.voiced_frame_count == 97


def test_duration_from_manifest_times():
    feats = extract_features(record(onset=1.30, offset=2.75), harmonic(150, 1.2))
    assert feats.duration_s == pytest.approx(1.45, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 100))
def test_gain_invariance(gain):
    x = voiced(180)
    a = extract_features(record(), x)
    b = extract_features(record(), gain * x)
    assert b.mean_log_f0 == pytest.approx(a.mean_log_f0, abs=1e-6)
    assert b.std_log_f0 == pytest.approx(a.std_log_f0, abs=1e-6)
    assert b.spectral_tilt == pytest.approx(a.spectral_tilt, abs=1e-6)


@pytest.mark.parametrize("ratio", [0.8, 1.25, 1.5])
def test_pitch_shift_covariance(ratio):
    base = extract_features(record(), voiced(160))
    shifted = extract_features(record(), voiced(160 * ratio))
    assert shifted.mean_log_f0 - base.mean_log_f0 == pytest.approx(math.log(ratio), abs=0.01)


def test_unvoiced_keeps_tilt_and_duration():
    noise = np.random.default_rng(0).normal(size=SR) * 0.1
    feats = extract_features(record(), noise)
    assert feats.mean_log_f0 is None and feats.std_log_f0 is None
    assert feats.voiced_frame_count < 3
    assert math.isfinite(feats.spectral_tilt) and feats.duration_s == 1.0


def test_mean_log_f0_in_search_range():
    for f0 in (80, 300, 550):
        m = extract_features(record(), harmonic(f0, 0.5)).mean_log_f0
        assert math.log(75) <= m <= math.log(600)


def _write(tmp_path, uid, x):
    write_wav(tmp_path / f"{uid}.wav", AudioBuffer(x, SR))


def test_batch_with_unreadable(tmp_path, caplog):
    _write(tmp_path, "a", harmonic(200, 1.0))
    _write(tmp_path, "b", harmonic(150, 1.0))
    (tmp_path / "c.wav").write_bytes(b"not a wav")
    recs = (record("a"), record("b", addressee="adult"), record("c"))
    rows = batch_features(CorpusManifest("t", recs), None, wav_loader(tmp_path))
    assert [r.utterance_id for r in rows] == ["a", "b", "c"]
    assert [r.status for r in rows] == ["ok", "ok", "error"]
    assert rows[1].register == "ADS"
    assert rows[2].features is None and rows[2].value("duration_s") is None
    assert "c:" in caplog.text


def test_batch_empty_subset(tmp_path):
    m = CorpusManifest("t", (record("a"),))
    assert batch_features(m, QualitySubset("strict", frozenset()), wav_loader(tmp_path)) == []


def test_batch_skips_unregistered(tmp_path):
    _write(tmp_path, "a", harmonic(200, 1.0))
    m = CorpusManifest("t", (record("a"), record("k", role="child")))
    assert [r.utterance_id for r in batch_features(m, None, wav_loader(tmp_path))] == ["a"]


def test_identical_audio_identical_features(tmp_path):
    x = voiced(210)
    _write(tmp_path, "a", x)
    _write(tmp_path, "b", x)
    m = CorpusManifest("t", (record("a"), record("b")))
    rows = batch_features(m, {"a", "b"}, wav_loader(tmp_path))
    assert rows[0].features == rows[1].features


def test_parallel_matches_serial(tmp_path):
    recs = []
    for i, f0 in enumerate((120, 180, 240, 300)):
        _write(tmp_path, f"u{i}", voiced(f0, 0.6, seed=i))
        recs.append(record(f"u{i}", offset=0.6))
    m = CorpusManifest("t", tuple(recs))
    serial = batch_features(m, None, wav_loader(tmp_path), workers=1)
    parallel = batch_features(m, None, wav_loader(tmp_path), workers=3)
    assert serial == parallel


def test_feature_names():
    assert FEATURE_NAMES == ("mean_log_f0", "std_log_f0", "spectral_tilt", "duration_s")
