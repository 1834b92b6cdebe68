"""Energy-based VAD, per-utterance SNR, threshold calibration and quality subsets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import dsp
from .corpus import CorpusManifest, QualitySubset, manual_subsets

SILENCE_DB = -100.0


class VadError(ValueError):
    pass


@dataclass(frozen=True)
class ScreeningConfig:
    noise_percentile: float = 20.0
    margin_db: float = 2.0
    min_frames: int = 10
    min_class_frames: int = 3
    snr_floor_eps: float = 1e-3


@dataclass(frozen=True)
class SnrEstimate:
    utterance_id: str
    snr_db: Optional[float]
    speech_frames: int
    noise_frames: int

    @property
    def status(self) -> str:
        return "ok" if self.snr_db is not None else "undefined"


@dataclass(frozen=True)
class CalibrationResult:
    threshold_db: float
    youden_j: float
    n_good: int
    n_rest: int

    def to_json(self) -> dict:
        return {
            "threshold_db": self.threshold_db,
            "youden_j": self.youden_j,
            "n_good": self.n_good,
            "n_rest": self.n_rest,
        }


def _majority3(mask: np.ndarray) -> np.ndarray:
    if len(mask) < 3:
        return mask.copy()
    padded = np.concatenate([mask[:1], mask, mask[-1:]]).astype(np.int8)
    votes = padded[:-2] + padded[1:-1] + padded[2:]
    return votes >= 2


def vad_mask(samples, config: ScreeningConfig = ScreeningConfig(), sr: int = dsp.SR) -> np.ndarray:
    """Boolean speech mask on the 25 ms / 10 ms energy grid.

    A frame is speech when its energy reaches the ``noise_percentile`` of
    all frame energies plus ``margin_db``; a 3-frame majority vote then
    smooths the decision. When no frame reaches that level the signal has
    no energy contrast, and every frame above digital silence is speech.
    """
    energy = dsp.short_time_energy(samples, dsp.ENERGY_FRAMES, sr).values[:, 0]
    if len(energy) < config.min_frames:
        raise VadError("utterance too short for VAD")
    threshold = np.percentile(energy, config.noise_percentile) + config.margin_db
    mask = energy >= threshold
    if not mask.any():
        mask = energy > SILENCE_DB
    return _majority3(mask)


def estimate_snr(
    samples, utterance_id: str = "", config: ScreeningConfig = ScreeningConfig(), sr: int = dsp.SR
) -> SnrEstimate:
    """SNR in dB from mean frame powers of VAD speech vs non-speech frames.

    ``snr_db`` is None when either class has fewer than
    ``config.min_class_frames`` frames or the utterance is too short for VAD.
    """
    try:
        mask = vad_mask(samples, config, sr)
    except VadError:
        n = dsp.n_frames(len(samples), *dsp.ENERGY_FRAMES.lengths(sr))
        return SnrEstimate(utterance_id, None, 0, n)
    power = dsp.frame_mean_square(samples, dsp.ENERGY_FRAMES, sr)
    n_speech = int(mask.sum())
    n_noise = int((~mask).sum())
    if n_speech < config.min_class_frames or n_noise < config.min_class_frames:
        return SnrEstimate(utterance_id, None, n_speech, n_noise)
    snr = snr_db_from_powers(float(power[mask].mean()), float(power[~mask].mean()), config.snr_floor_eps)
    return SnrEstimate(utterance_id, snr, n_speech, n_noise)


def snr_db_from_powers(p_speech: float, p_noise: float, eps: float = 1e-3) -> float:
    """10·log10(max(Ps - Pn, eps·Pn) / Pn); never below 10·log10(eps)."""
    if p_noise <= 0.0:
        p_noise = dsp.ENERGY_FLOOR
    return 10.0 * math.log10(max(p_speech - p_noise, eps * p_noise) / p_noise)


def calibrate_threshold(estimates: Iterable[tuple[float, str]]) -> CalibrationResult:
    """Choose the SNR cut that best separates ``good`` from ``medium``/``bad``.

    Candidates are -inf, the midpoints of adjacent distinct SNR values, and
    +inf; an utterance counts as predicted-good when its SNR is strictly
    above the cut. The cut maximises Youden's J; ties go to the lowest cut.
    """
    pairs = [(float(s), q) for s, q in estimates if q is not None]
    snrs = np.array([s for s, _ in pairs], dtype=np.float64)
    good = np.array([q == "good" for _, q in pairs], dtype=bool)
    n_good = int(good.sum())
    n_rest = int(len(good) - n_good)
    if n_good == 0 or n_rest == 0:
        raise ValueError(
            f"calibration needs both classes (good={n_good}, medium/bad={n_rest})"
        )
    if not np.all(np.isfinite(snrs)):
        raise ValueError("calibration SNR values must be finite")

    values = np.unique(snrs)
    # counts of good / rest at or below each distinct value
    good_le = np.searchsorted(np.sort(snrs[good]), values, side="right")
    rest_le = np.searchsorted(np.sort(snrs[~good]), values, side="right")
    # cut between values[i] and values[i+1]: predicted good = above values[i]
    tp = np.concatenate([[n_good], n_good - good_le])
    tn = np.concatenate([[0], rest_le])
    # J·n_good·n_rest in exact integer arithmetic, so ties compare exactly
    scaled = tp.astype(np.int64) * n_rest + tn.astype(np.int64) * n_good - n_good * n_rest
    best = int(np.argmax(scaled))  # first max = lowest cut
    if best == 0:
        threshold = -math.inf
    elif best == len(values):
        threshold = math.inf
    else:
        threshold = float((values[best - 1] + values[best]) / 2.0)
    j = float(scaled[best]) / (n_good * n_rest)
    return CalibrationResult(threshold, j, n_good, n_rest)


def calibration_pairs(
    manifest: CorpusManifest, estimates: Mapping[str, SnrEstimate]
) -> list[tuple[float, str]]:
    """(snr_db, label) for labelled utterances with a defined SNR, manifest order."""
    out = []
    for rec in manifest.records:
        est = estimates.get(rec.utterance_id)
        if rec.manual_quality is None or est is None or est.snr_db is None:
            continue
        out.append((est.snr_db, rec.manual_quality))
    return out


def build_subsets(
    manifest: CorpusManifest, snr_estimates: Mapping[str, SnrEstimate] | Sequence[SnrEstimate], threshold_db: float
) -> dict[str, QualitySubset]:
    if not math.isfinite(threshold_db):
        raise ValueError(f"SNR threshold must be finite, got {threshold_db}")
    if not isinstance(snr_estimates, Mapping):
        snr_estimates = {e.utterance_id: e for e in snr_estimates}
    strict, relaxed = manual_subsets(manifest)
    above = frozenset(
        uid
        for uid, est in snr_estimates.items()
        if est.snr_db is not None and est.snr_db > threshold_db
    )
    snr = QualitySubset("snr", above, rule=f"snr_db > {threshold_db:.2f}")
    return {"strict": strict, "relaxed": relaxed, "snr": snr}
