import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import butter, sosfilt

from helpers import add_noise, harmonic, pulse_train
from longform_bench import dsp

SR = 16000


@pytest.mark.parametrize("n,expected", [(16000, 98), (399, 0), (400, 1), (560, 2)])
def test_frame_counts(n, expected):
    frames = dsp.frame_signal(np.ones(n), dsp.MFCC_FRAMES)
    assert len(frames) == expected
    assert frames.values.shape[1] == 400


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 5000), st.integers(2, 800), st.integers(1, 400))
def test_frame_count_formula(n, frame_len, hop):
    expected = (n - frame_len) // hop + 1 if n >= frame_len else 0
    assert dsp.n_frames(n, frame_len, hop) == expected


def test_frame_config_validation():
    with pytest.raises(ValueError):
        dsp.FrameConfig(10.0, 10.0)
    with pytest.raises(ValueError):
        dsp.MelConfig(n_ceps=41)
    with pytest.raises(ValueError):
        dsp.F0Config(fmin_hz=700)


def test_frame_times():
    frames = dsp.frame_signal(np.ones(1000), dsp.MFCC_FRAMES)
    np.testing.assert_allclose(frames.times(), [0.0125, 0.0225, 0.0325, 0.0425])


def test_zero_frame_zero_spectrum():
    spec = dsp.power_spectrum(dsp.frame_signal(np.zeros(400)), 512)
    assert spec.values.shape == (1, 257)
    assert np.all(spec.values == 0)


def test_centred_impulse_flat_spectrum():
    x = np.zeros(400)
    x[200] = 1.0  # the periodic Hann window is exactly 1 at the frame centre
    spec = dsp.power_spectrum(dsp.frame_signal(x), 512).values[0]
    np.testing.assert_allclose(spec, 1.0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([400, 512, 1024]))
def test_parseval(seed, n_fft):
    x = np.random.default_rng(seed).normal(size=1200)
    frames = dsp.frame_signal(x, dsp.MFCC_FRAMES)
    spec = dsp.power_spectrum(frames, n_fft).values
    # the one-sided spectrum counts every bin except DC and Nyquist twice
    weights = np.full(n_fft // 2 + 1, 2.0)
    weights[0] = weights[-1] = 1.0
    energy_time = (frames.values ** 2).sum(axis=1)
    energy_freq = (spec * weights).sum(axis=1) / n_fft
    np.testing.assert_allclose(energy_freq, energy_time, rtol=1e-10)


def test_mfcc_gain_shifts_c0_only():
    x = add_noise(harmonic(180, 0.5), 30)
    base = dsp.mfcc(x).values
    for g in (0.1, 2.0, 10.0):
        c = dsp.mfcc(g * x).values
        np.testing.assert_allclose(c[:, 1:], base[:, 1:], rtol=0, atol=1e-6)
        np.testing.assert_allclose(c[:, 0] - base[:, 0], 2 * math.log(g) * math.sqrt(40), atol=1e-9)


def test_lowpass_raises_c1():
    rng = np.random.default_rng(5)
    x = rng.normal(size=SR)
    lp = sosfilt(butter(4, 1000, fs=SR, output="sos"), x)
    c1_white = dsp.mfcc(x).values[:, 1].mean()
    c1_lp = dsp.mfcc(lp).values[:, 1].mean()
    assert c1_lp > c1_white


def test_zero_frame_mfcc():
    c = dsp.mfcc(np.zeros(400)).values[0]
    assert c[0] == pytest.approx(40 * math.log(1e-10) / math.sqrt(40), rel=1e-12)
    np.testing.assert_allclose(c[1:], 0.0, atol=1e-9)


def test_mel_filterbank_shape_and_support():
    cfg = dsp.MelConfig()
    fb = dsp.mel_filterbank(cfg)
    assert fb.shape == (40, 257)
    assert np.all(fb.sum(axis=1) > 0)
    assert fb.max() == pytest.approx(1.0, abs=0.05)
    centres = []
    for row in fb:
        nz = np.flatnonzero(row)
        assert np.all(np.diff(nz) == 1), "support must be contiguous"
        seg = row[nz]
        peak = int(np.argmax(seg))
        assert np.all(np.diff(seg[: peak + 1]) >= 0) and np.all(np.diff(seg[peak:]) <= 0)
        centres.append(nz[0] + peak)
    hz_centres = dsp.mel_to_hz(np.linspace(dsp.hz_to_mel(cfg.fmin_hz), dsp.hz_to_mel(cfg.fmax_hz), 42))[1:-1]
    assert np.all(np.diff(hz_centres) > 0)
    assert np.all(np.diff(centres) >= 0)


def test_dct_orthonormal():
    m = dsp.dct_matrix(40, 40)
    np.testing.assert_allclose(m @ m.T, np.eye(40), atol=1e-12)
    np.testing.assert_allclose(dsp.dct_matrix(13, 40), m[:13])


def test_mel_bins_checked():
    with pytest.raises(ValueError, match="bins"):
        dsp.mel_mfcc(dsp.power_spectrum(dsp.frame_signal(np.ones(400)), 1024))


def test_logmel_shape():
    assert dsp.logmel_frames(np.ones(16000)).shape == (98, 40)


def test_f0_sine_200():
    t = np.arange(SR) / SR
    f0 = dsp.f0_track(np.sin(2 * np.pi * 200 * t))
    assert len(f0) == dsp.n_frames(SR, 640, 160)
    assert not np.any(np.isnan(f0))
    assert np.all(np.abs(f0 / 200 - 1) < 0.02)


def test_f0_white_noise_unvoiced():
    fractions = []
    for seed in range(100):
        f0 = dsp.f0_track(np.random.default_rng(seed).normal(size=SR))
        fractions.append(np.isnan(f0).mean())
    assert min(fractions) > 0.9


def test_f0_pulse_train_in_noise():
    x = add_noise(pulse_train(200, 1.0), 20, seed=4)
    f0 = dsp.f0_track(x)
    assert abs(np.nanmedian(f0) / 200 - 1) < 0.02


@settings(max_examples=25, deadline=None)
@given(st.floats(80, 500), st.floats(0.01, 100), st.booleans())
def test_f0_polarity_and_gain_invariant(freq, gain, flip):
    x = harmonic(freq, 0.3, seed=1)
    ref = dsp.f0_track(x)
    out = dsp.f0_track((-gain if flip else gain) * x)
    assert np.array_equal(np.isnan(ref), np.isnan(out))
    np.testing.assert_allclose(out, ref, rtol=1e-9)


def test_f0_chirp():
    dur = 2.0
    t = np.arange(int(dur * SR)) / SR
    f_inst = 100 + (400 - 100) * t / dur
    x = np.sin(2 * np.pi * np.cumsum(f_inst) / SR)
    f0 = dsp.f0_track(x)
    centres = (np.arange(len(f0)) * 160 + 320) / SR
    truth = 100 + 300 * centres / dur
    inner = slice(2, len(f0) - 2)
    voiced = ~np.isnan(f0[inner])
    assert voiced.mean() > 0.95
    assert np.max(np.abs(f0[inner][voiced] / truth[inner][voiced] - 1)) < 0.03


def test_f0_short_input():
    assert len(dsp.f0_track(np.ones(100))) == 0


def test_energy_examples():
    ones = dsp.short_time_energy(np.ones(SR)).values[:, 0]
    assert np.allclose(ones, 0.0, atol=1e-9)
    silence = dsp.short_time_energy(np.zeros(SR)).values[:, 0]
    assert np.allclose(silence, -120.0)
    x = np.random.default_rng(0).normal(size=SR)
    drop = dsp.short_time_energy(x).values - dsp.short_time_energy(0.5 * x).values
    np.testing.assert_allclose(drop, 20 * math.log10(2), atol=1e-6)
