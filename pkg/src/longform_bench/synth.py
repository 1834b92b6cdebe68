"""Synthetic stand-in corpora with planted IDS/ADS differences.

Utterances are vowel-like syllables: a harmonic pulse train with a seeded
log-F0 contour, shaped by per-vowel formant resonators and a per-register
spectral tilt, grouped into words separated by short pauses, then mixed
with noise at the quality tier's SNR. Vowel order follows a fixed Markov
chain, which gives the self-supervised model something to learn.

The realism is bounded: this validates the pipeline, not developmental
claims about real infant-directed speech.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
from scipy.signal import lfilter

from .audio import AudioBuffer, write_wav
from .corpus import CorpusManifest, UtteranceRecord, write_manifest

SR = 16000

# (F1, F2, F3) in Hz
VOWELS = np.array(
    [
        [730, 1090, 2440],
        [270, 2290, 3010],
        [300, 870, 2240],
        [530, 1840, 2480],
        [570, 840, 2410],
        [660, 1720, 2410],
    ],
    dtype=np.float64,
)
BANDWIDTHS = np.array([80.0, 100.0, 140.0])
# each vowel strongly prefers one successor
_TRANSITIONS = np.full((6, 6), 0.04)
for _i, _j in enumerate([3, 4, 0, 5, 1, 2]):
    _TRANSITIONS[_i, _j] = 0.8
_TRANSITIONS /= _TRANSITIONS.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class RegisterParams:
    base_f0_hz: float
    f0_log_std: float  # within-utterance contour spread
    utt_log_f0_sd: float  # between-utterance spread of mean log-F0
    tilt_db_per_octave: float
    duration_mean_s: float
    duration_sd_s: float


@dataclass(frozen=True)
class TierParams:
    snr_db: float
    noise: str  # white | pink | babble


@dataclass(frozen=True)
class SynthSpec:
    ids: RegisterParams = RegisterParams(160.0 * math.exp(0.20), 0.10, 0.15, -6.0, 1.5, 0.3)
    ads: RegisterParams = RegisterParams(160.0, 0.07, 0.15, -9.0, 1.9, 0.4)
    count_per_register: int = 40
    tiers: dict = field(
        default_factory=lambda: {
            "good": TierParams(20.0, "white"),
            "medium": TierParams(10.0, "babble"),
            "bad": TierParams(0.0, "babble"),
        }
    )
    margin_s: float = 0.3
    corpus_name: str = "synth"

    def __post_init__(self):
        if self.count_per_register < 1:
            raise ValueError("count_per_register must be >= 1")
        snrs = [self.tiers[t].snr_db for t in ("good", "medium", "bad") if t in self.tiers]
        if any(a <= b for a, b in zip(snrs, snrs[1:])):
            raise ValueError("tier SNRs must be strictly ordered good > medium > bad")

    def to_json(self) -> dict:
        d = asdict(self)
        d["tiers"] = {k: asdict(v) for k, v in self.tiers.items()}
        return d

    @classmethod
    def from_json(cls, data: dict) -> "SynthSpec":
        data = dict(data)
        kw = {}
        for reg in ("ids", "ads"):
            if reg in data:
                kw[reg] = RegisterParams(**data.pop(reg))
        if "tiers" in data:
            kw["tiers"] = {k: TierParams(**v) for k, v in data.pop("tiers").items()}
        return cls(**kw, **data)


# read-style training speech: a single broad "adult" style, no registers
TRAINING_STYLE = RegisterParams(170.0, 0.08, 0.25, -8.0, 3.5, 1.0)


def _resonator(freq: float, bw: float, sr: int) -> tuple[np.ndarray, np.ndarray]:
    r = math.exp(-math.pi * bw / sr)
    theta = 2 * math.pi * freq / sr
    a = np.array([1.0, -2 * r * math.cos(theta), r * r])
    return np.array([a.sum()]), a  # unit gain at DC


def _smooth_contour(rng: np.random.Generator, n: int, sr: int) -> np.ndarray:
    """Zero-mean, unit-std slow contour from a few random low-frequency sinusoids."""
    t = np.arange(n) / sr
    out = np.zeros(n)
    for _ in range(3):
        f = rng.uniform(0.4, 2.5)
        out += rng.uniform(0.5, 1.0) * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    out -= out.mean()
    rms = math.sqrt(float(np.mean(out * out)))
    return out / rms if rms > 0 else out


def _pulse_train(f0: np.ndarray, sr: int) -> np.ndarray:
    phase = np.cumsum(f0 / sr)
    pulses = np.zeros(len(f0))
    crossings = np.nonzero(np.diff(np.floor(phase)) > 0)[0] + 1
    pulses[crossings] = 1.0
    return pulses - pulses.mean()


def _apply_tilt(x: np.ndarray, db_per_octave: float, sr: int) -> np.ndarray:
    spec = np.fft.rfft(x)
    f = np.fft.rfftfreq(len(x), 1.0 / sr)
    gain = np.ones_like(f)
    nz = f > 0
    gain[nz] = 10 ** (db_per_octave * np.log2(np.maximum(f[nz], 50.0) / 500.0) / 20)
    return np.fft.irfft(spec * gain, len(x))


def _plan_syllables(rng: np.random.Generator, duration_s: float, lead_s: float) -> list[tuple[int, float, float]]:
    """(vowel, start_s, end_s) triples filling ``duration_s`` after a lead pause."""
    out = []
    t = lead_s
    end = duration_s - lead_s
    vowel = int(rng.integers(len(VOWELS)))
    while t < end - 0.1:
        for _ in range(int(rng.integers(1, 4))):
            length = rng.uniform(0.12, 0.24)
            if t + length > end:
                break
            out.append((vowel, t, t + length))
            t += length
            vowel = int(rng.choice(len(VOWELS), p=_TRANSITIONS[vowel]))
        t += rng.uniform(0.08, 0.2)
    if not out:
        out.append((vowel, lead_s, max(lead_s + 0.05, end)))
    return out


def synth_speech(
    rng: np.random.Generator, style: RegisterParams, duration_s: float, sr: int = SR
) -> tuple[np.ndarray, np.ndarray, float]:
    """Clean utterance, its speech-activity mask, and its mean log-F0."""
    n = int(round(duration_s * sr))
    mean_lf0 = math.log(style.base_f0_hz) + rng.normal(0.0, style.utt_log_f0_sd)
    decl = np.linspace(0.05, -0.05, n)
    lf0 = mean_lf0 + style.f0_log_std * _smooth_contour(rng, n, sr) + decl
    source = _pulse_train(np.exp(lf0), sr)

    speech = np.zeros(n)
    active = np.zeros(n, dtype=bool)
    ramp = int(0.02 * sr)
    tail = int(0.03 * sr)
    for vowel, start, stop in _plan_syllables(rng, duration_s, lead_s=rng.uniform(0.15, 0.25)):
        a, b = int(start * sr), min(int(stop * sr), n)
        seg = source[a:b]
        seg = np.concatenate([seg, np.zeros(tail)])
        formants = VOWELS[vowel] * rng.uniform(0.95, 1.05)
        for f, bw in zip(formants, BANDWIDTHS):
            num, den = _resonator(f, bw, sr)
            seg = lfilter(num, den, seg)
        env = np.ones(b - a)
        r = min(ramp, (b - a) // 2)
        if r > 0:
            edge = 0.5 - 0.5 * np.cos(np.pi * np.arange(r) / r)
            env[:r] = edge
            env[-r:] = edge[::-1]
        seg = seg[: b - a] * env
        speech[a:b] += seg
        active[a:b] = True
    speech = _apply_tilt(speech, style.tilt_db_per_octave, sr)
    return speech, active, mean_lf0


def make_noise(rng: np.random.Generator, kind: str, n: int, sr: int = SR) -> np.ndarray:
    """Unit-power noise of the given kind."""
    white = rng.standard_normal(n)
    if kind == "white":
        out = white
    elif kind in ("pink", "babble"):
        # Voss-style approximation of 1/f via a fixed IIR filter
        b = [0.049922035, -0.095993537, 0.050612699, -0.004408786]
        a = [1.0, -2.494956002, 2.017265875, -0.522189400]
        out = lfilter(b, a, white)
        if kind == "babble":
            out = out / out.std()
            t = np.arange(n) / sr
            f0 = rng.uniform(110.0, 260.0) * np.exp(0.05 * np.sin(2 * np.pi * rng.uniform(0.2, 1.0) * t))
            phase = 2 * np.pi * np.cumsum(f0) / sr
            hum = sum(np.sin(h * phase) / h for h in range(1, 12))
            hum = hum / hum.std()
            out = np.sqrt(0.5) * out + np.sqrt(0.5) * hum
    else:
        raise ValueError(f"unknown noise type {kind!r}")
    rms = math.sqrt(float(np.mean(out * out)))
    return out / rms if rms > 0 else out


def mix_at_snr(speech: np.ndarray, active: np.ndarray, noise: np.ndarray, snr_db: float) -> np.ndarray:
    """Scale unit-power noise so active-speech power over noise power is ``snr_db``."""
    p_speech = float(np.mean(speech[active] ** 2)) if active.any() else float(np.mean(speech ** 2))
    return speech + noise * math.sqrt(p_speech / 10 ** (snr_db / 10))


def _utterance_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([seed, *key])


@dataclass(frozen=True)
class SynthUtterance:
    record: UtteranceRecord
    samples: np.ndarray  # full file content, including margins
    planted_mean_log_f0: float


def iter_register_corpus(spec: SynthSpec, seed: int) -> Iterator[SynthUtterance]:
    """Utterances for every tier × register, interleaved IDS/ADS, deterministic."""
    for t_idx, (tier, tparams) in enumerate(sorted(spec.tiers.items())):
        for i in range(spec.count_per_register):
            for r_idx, (reg, style, addressee) in enumerate(
                [("ids", spec.ids, "infant"), ("ads", spec.ads, "adult")]
            ):
                rng = _utterance_rng(seed, 1, t_idx, i, r_idx)
                duration = max(0.6, rng.normal(style.duration_mean_s, style.duration_sd_s))
                speech, active, mean_lf0 = synth_speech(rng, style, duration)
                level = 10 ** rng.uniform(-1.2, -0.6)
                pad = int(round(spec.margin_s * SR))
                speech = np.concatenate([np.zeros(pad), speech, np.zeros(pad)])
                active = np.concatenate([np.zeros(pad, bool), active, np.zeros(pad, bool)])
                noise = make_noise(rng, tparams.noise, len(speech))
                mixed = mix_at_snr(speech, active, noise, tparams.snr_db)
                mixed *= level / np.max(np.abs(mixed))
                uid = f"{tier}_{reg}_{i:03d}"
                role = "adult_female" if i % 3 else "adult_male"
                rec = UtteranceRecord(
                    utterance_id=uid,
                    audio_path=f"audio/{uid}.wav",
                    onset_s=spec.margin_s,
                    offset_s=round(spec.margin_s + len(speech[pad:-pad]) / SR, 6),
                    speaker_role=role,
                    addressee=addressee,
                    manual_quality=tier,
                )
                yield SynthUtterance(rec, mixed, mean_lf0)


def iter_training_utterances(
    seed: int, total_minutes: float, style: RegisterParams = TRAINING_STYLE, snr_db: float = 30.0
) -> Iterator[tuple[str, np.ndarray]]:
    """Clean read-style utterances until ``total_minutes`` of audio is produced."""
    produced = 0.0
    i = 0
    while produced < total_minutes * 60.0:
        rng = _utterance_rng(seed, 2, i)
        duration = float(np.clip(rng.normal(style.duration_mean_s, style.duration_sd_s), 1.5, 8.0))
        speech, active, _ = synth_speech(rng, style, duration)
        noise = make_noise(rng, "white", len(speech))
        mixed = mix_at_snr(speech, active, noise, snr_db)
        mixed *= 10 ** rng.uniform(-1.2, -0.6) / np.max(np.abs(mixed))
        yield f"train_{i:05d}", mixed
        produced += len(mixed) / SR
        i += 1


def gen_synth(spec: SynthSpec, seed: int, out_dir, train_minutes: float = 0.0) -> dict:
    """Write WAVs and manifests under ``out_dir``; returns the written paths.

    ``manifest.csv`` holds the register corpus, ``train_manifest.csv`` the
    read-style training corpus (only when ``train_minutes > 0``).
    """
    out = Path(out_dir)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    records = []
    for utt in iter_register_corpus(spec, seed):
        write_wav(out / utt.record.audio_path, AudioBuffer(utt.samples, SR))
        records.append(utt.record)
    manifest = CorpusManifest(spec.corpus_name, tuple(records), SR)
    write_manifest(manifest, out / "manifest.csv")
    paths = {"manifest": out / "manifest.csv", "audio_root": out}

    if train_minutes > 0:
        (out / "train_audio").mkdir(exist_ok=True)
        train_records = []
        for uid, samples in iter_training_utterances(seed, train_minutes):
            rel = f"train_audio/{uid}.wav"
            write_wav(out / rel, AudioBuffer(samples, SR))
            train_records.append(
                UtteranceRecord(uid, rel, 0.0, round(len(samples) / SR, 6), "adult_female", "other", None)
            )
        write_manifest(CorpusManifest("train", tuple(train_records), SR), out / "train_manifest.csv")
        paths["train_manifest"] = out / "train_manifest.csv"
    return paths


def planted_effects(spec: SynthSpec) -> dict[str, float]:
    return {
        "mean_log_f0": math.log(spec.ids.base_f0_hz) - math.log(spec.ads.base_f0_hz),
        "duration_s": spec.ids.duration_mean_s - spec.ads.duration_mean_s,
    }


def tier_of(record: UtteranceRecord) -> Optional[str]:
    return record.manual_quality
