"""Framing, spectra, mel cepstra, autocorrelation pitch tracking and frame energy.

Everything here assumes 16 kHz mono input unless a sample rate is passed.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SR = 16000
LOG_FLOOR = 1e-10
ENERGY_FLOOR = 1e-12


@dataclass(frozen=True)
class FrameConfig:
    frame_len_ms: float = 25.0
    hop_ms: float = 10.0
    window: str = "hann"

    def __post_init__(self):
        if not self.frame_len_ms > self.hop_ms > 0:
            raise ValueError("need frame_len_ms > hop_ms > 0")
        if self.window not in ("hann", "rect"):
            raise ValueError(f"unknown window {self.window!r}")

    def lengths(self, sr: int = SR) -> tuple[int, int]:
        return int(round(self.frame_len_ms * sr / 1000)), int(round(self.hop_ms * sr / 1000))


MFCC_FRAMES = FrameConfig(25.0, 10.0, "hann")
ENERGY_FRAMES = FrameConfig(25.0, 10.0, "rect")
F0_FRAMES = FrameConfig(40.0, 10.0, "rect")


@dataclass(frozen=True)
class MelConfig:
    n_fft: int = 512
    n_mels: int = 40
    fmin_hz: float = 20.0
    fmax_hz: float = 8000.0
    n_ceps: int = 13

    def __post_init__(self):
        if not 0 <= self.fmin_hz < self.fmax_hz:
            raise ValueError("need 0 <= fmin_hz < fmax_hz")
        if self.n_ceps > self.n_mels:
            raise ValueError("n_ceps must not exceed n_mels")


@dataclass(frozen=True)
class F0Config:
    fmin_hz: float = 75.0
    fmax_hz: float = 600.0
    voicing_threshold: float = 0.45
    octave_cost: float = 0.01

    def __post_init__(self):
        if not 0 < self.fmin_hz < self.fmax_hz:
            raise ValueError("need 0 < fmin_hz < fmax_hz")
        if not 0 < self.voicing_threshold < 1:
            raise ValueError("voicing_threshold must be in (0, 1)")


@dataclass(frozen=True, eq=False)
class FrameSeries:
    """``values`` is (n_frames, dims); ``start_offset_s`` is the first frame's centre."""

    values: np.ndarray
    hop_s: float
    start_offset_s: float = 0.0

    def __len__(self) -> int:
        return self.values.shape[0]

    def times(self) -> np.ndarray:
        return self.start_offset_s + self.hop_s * np.arange(len(self))


def n_frames(n_samples: int, frame_len: int, hop: int) -> int:
    if n_samples < frame_len:
        return 0
    return (n_samples - frame_len) // hop + 1


@lru_cache(maxsize=16)
def _window(kind: str, n: int) -> np.ndarray:
    if kind == "rect":
        w = np.ones(n)
    else:
        # periodic Hann: w[n // 2] == 1
        w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    w.setflags(write=False)
    return w


def _frame_matrix(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    count = n_frames(len(x), frame_len, hop)
    if count == 0:
        return np.zeros((0, frame_len))
    view = np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop]
    return np.array(view[:count])


def frame_signal(samples, config: FrameConfig = MFCC_FRAMES, sr: int = SR) -> FrameSeries:
    x = np.asarray(samples, dtype=np.float64)
    frame_len, hop = config.lengths(sr)
    frames = _frame_matrix(x, frame_len, hop) * _window(config.window, frame_len)
    return FrameSeries(frames, hop / sr, frame_len / (2 * sr))


def power_spectrum(frames: FrameSeries, n_fft: int = 512) -> FrameSeries:
    values = frames.values
    if values.shape[1] > n_fft:
        raise ValueError(f"frame length {values.shape[1]} exceeds n_fft {n_fft}")
    spec = np.abs(np.fft.rfft(values, n_fft, axis=1)) ** 2
    return FrameSeries(spec, frames.hop_s, frames.start_offset_s)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def mel_filterbank(config: MelConfig = MelConfig(), sr: int = SR) -> np.ndarray:
    """Triangular filters with unit peak, (n_mels, n_fft // 2 + 1)."""
    if config.fmax_hz > sr / 2:
        raise ValueError("fmax_hz above Nyquist")
    edges = mel_to_hz(np.linspace(hz_to_mel(config.fmin_hz), hz_to_mel(config.fmax_hz), config.n_mels + 2))
    freqs = np.arange(config.n_fft // 2 + 1) * sr / config.n_fft
    lower, centre, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lower) / (centre - lower)
    falling = (upper - freqs[None, :]) / (upper - centre)
    fb = np.clip(np.minimum(rising, falling), 0.0, None)
    fb.setflags(write=False)
    return fb


@lru_cache(maxsize=8)
def dct_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Orthonormal DCT-II rows 0..n_out-1."""
    k = np.arange(n_out)[:, None]
    n = np.arange(n_in)[None, :]
    m = np.cos(np.pi * k * (2 * n + 1) / (2 * n_in)) * np.sqrt(2.0 / n_in)
    m[0] /= np.sqrt(2.0)
    m.setflags(write=False)
    return m


def log_mel(power_frames: FrameSeries, config: MelConfig = MelConfig(), sr: int = SR) -> FrameSeries:
    fb = mel_filterbank(config, sr)
    if power_frames.values.shape[1] != fb.shape[1]:
        raise ValueError(f"expected {fb.shape[1]} bins, got {power_frames.values.shape[1]}")
    mel = np.log(np.maximum(power_frames.values @ fb.T, LOG_FLOOR))
    return FrameSeries(mel, power_frames.hop_s, power_frames.start_offset_s)


def mel_mfcc(power_frames: FrameSeries, config: MelConfig = MelConfig(), sr: int = SR) -> FrameSeries:
    """MFCCs c0..c(n_ceps-1): mel filterbank, log, orthonormal DCT-II. No liftering."""
    mel = log_mel(power_frames, config, sr)
    ceps = mel.values @ dct_matrix(config.n_ceps, config.n_mels).T
    return FrameSeries(ceps, mel.hop_s, mel.start_offset_s)


def mfcc(samples, config: MelConfig = MelConfig(), sr: int = SR) -> FrameSeries:
    return mel_mfcc(power_spectrum(frame_signal(samples, MFCC_FRAMES, sr), config.n_fft), config, sr)


def logmel_frames(samples, config: MelConfig = MelConfig(), sr: int = SR) -> np.ndarray:
    """40-dim log-mel frames at 10 ms hop, (n_frames, n_mels)."""
    return log_mel(power_spectrum(frame_signal(samples, MFCC_FRAMES, sr), config.n_fft), config, sr).values


def _nccf(frames: np.ndarray, max_lag: int) -> np.ndarray:
    """Normalised cross-correlation of each frame with its own lagged copy.

    r[τ] = Σ x[n]x[n+τ] / sqrt(Σ x[n]² · Σ x[n+τ]²), n over the overlap.
    """
    n = frames.shape[1]
    size = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(frames, size, axis=1)
    acf = np.fft.irfft(spec * np.conj(spec), size, axis=1)[:, : max_lag + 1]
    sq = frames * frames
    csum = np.concatenate([np.zeros((frames.shape[0], 1)), np.cumsum(sq, axis=1)], axis=1)
    total = csum[:, -1:]
    lags = np.arange(max_lag + 1)
    head = csum[:, n - lags]  # Σ_{0..n-τ-1} x²
    tail = total - csum[:, lags]  # Σ_{τ..n-1} x²
    denom = np.sqrt(head * tail)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(denom > 0, acf / denom, 0.0)
    return r


def f0_track(samples, config: F0Config = F0Config(), sr: int = SR) -> np.ndarray:
    """Per-frame F0 in Hz on a 40 ms / 10 ms grid; NaN marks unvoiced frames.

    The best lag maximises the normalised autocorrelation minus a small
    octave cost (``octave_cost * log2(lag / min_lag)``), which breaks the
    near-ties between a period and its multiples in favour of the period.
    """
    x = np.asarray(samples, dtype=np.float64)
    frame_len, hop = F0_FRAMES.lengths(sr)
    frames = _frame_matrix(x, frame_len, hop)
    if len(frames) == 0:
        return np.zeros(0)
    frames = frames - frames.mean(axis=1, keepdims=True)
    min_lag = max(2, int(np.floor(sr / config.fmax_hz)))
    max_lag = min(frame_len - 2, int(np.ceil(sr / config.fmin_hz)))
    r = _nccf(frames, max_lag + 1)
    lags = np.arange(min_lag, max_lag + 1)
    band = r[:, min_lag : max_lag + 1]
    score = band - config.octave_cost * np.log2(lags / min_lag)[None, :]
    best = np.argmax(score, axis=1)
    peak = band[np.arange(len(band)), best]
    lag = (best + min_lag).astype(np.float64)

    left = r[np.arange(len(r)), best + min_lag - 1]
    right = r[np.arange(len(r)), best + min_lag + 1]
    curv = left - 2 * peak + right
    with np.errstate(invalid="ignore", divide="ignore"):
        delta = np.where(curv < 0, 0.5 * (left - right) / curv, 0.0)
    lag = lag + np.clip(delta, -0.5, 0.5)

    f0 = sr / lag
    voiced = peak > config.voicing_threshold
    return np.where(voiced, f0, np.nan)


def short_time_energy(samples, config: FrameConfig = ENERGY_FRAMES, sr: int = SR) -> FrameSeries:
    """Per-frame 10·log10(mean square + 1e-12) in dB, shape (n_frames, 1)."""
    frames = frame_signal(samples, config, sr)
    ms = (frames.values ** 2).mean(axis=1) if len(frames) else np.zeros(0)
    return FrameSeries((10 * np.log10(ms + ENERGY_FLOOR))[:, None], frames.hop_s, frames.start_offset_s)


def frame_mean_square(samples, config: FrameConfig = ENERGY_FRAMES, sr: int = SR) -> np.ndarray:
    frames = frame_signal(samples, config, sr)
    return (frames.values ** 2).mean(axis=1) if len(frames) else np.zeros(0)
