"""Per-utterance acoustic battery: log-F0 mean and spread, spectral tilt, duration."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import dsp
from .audio import load_utterance
from .corpus import CorpusManifest, UtteranceRecord, registered_records
from .screening import ScreeningConfig, VadError, vad_mask

log = logging.getLogger(__name__)

FEATURE_NAMES = ("mean_log_f0", "std_log_f0", "spectral_tilt", "duration_s")
MIN_VOICED = 3


@dataclass(frozen=True)
class AcousticFeatures:
    mean_log_f0: Optional[float]
    std_log_f0: Optional[float]
    spectral_tilt: float
    duration_s: float
    voiced_frame_count: int


@dataclass(frozen=True)
class FeatureRow:
    utterance_id: str
    register: str
    features: Optional[AcousticFeatures]
    status: str = "ok"

    def value(self, name: str) -> Optional[float]:
        if self.features is None:
            return None
        return getattr(self.features, name)


def extract_features(
    record: UtteranceRecord,
    samples,
    f0_config: dsp.F0Config = dsp.F0Config(),
    screening: ScreeningConfig = ScreeningConfig(),
    sr: int = dsp.SR,
) -> AcousticFeatures:
    """Features for one utterance whose audio is already sliced to its span.

    Tilt is the mean MFCC c1 over VAD speech frames (all frames when VAD
    finds none or the clip is too short for it). Duration comes from the
    manifest times, not from the audio length.
    """
    x = np.asarray(samples, dtype=np.float64)
    f0 = dsp.f0_track(x, f0_config, sr)
    voiced = f0[~np.isnan(f0)]
    mean_lf0 = std_lf0 = None
    if len(voiced) >= MIN_VOICED:
        log_f0 = np.log(voiced)
        mean_lf0 = float(log_f0.mean())
        std_lf0 = float(log_f0.std(ddof=1))

    c1 = dsp.mfcc(x, sr=sr).values[:, 1]
    try:
        mask = vad_mask(x, screening, sr)
    except VadError:
        mask = np.ones(len(c1), dtype=bool)
    if not mask.any():
        mask = np.ones(len(c1), dtype=bool)
    tilt = float(c1[mask].mean()) if len(c1) else math.nan

    return AcousticFeatures(mean_lf0, std_lf0, tilt, record.duration_s, int(len(voiced)))


Loader = Callable[[UtteranceRecord], np.ndarray]


def wav_loader(audio_root) -> Loader:
    root = Path(audio_root)

    def load(record: UtteranceRecord) -> np.ndarray:
        return load_utterance(root / record.audio_path, record.onset_s, record.offset_s).samples

    return load


def batch_features(
    manifest: CorpusManifest,
    subset,
    loader: Loader,
    workers: int = 1,
    f0_config: dsp.F0Config = dsp.F0Config(),
    screening: ScreeningConfig = ScreeningConfig(),
) -> list[FeatureRow]:
    """Feature rows for registered utterances in ``subset``, in manifest order.

    ``subset`` is a QualitySubset, a set of ids, or None for the whole manifest.

    Unreadable audio yields a row with status ``error``; the run continues.
    """
    ids = None if subset is None else getattr(subset, "utterance_ids", subset)
    todo = registered_records(manifest, ids)

    def one(item) -> FeatureRow:
        rec, reg = item
        try:
            samples = loader(rec)
            feats = extract_features(rec, samples, f0_config, screening)
        except (OSError, ValueError) as exc:
            log.warning("%s: %s", rec.utterance_id, exc)
            return FeatureRow(rec.utterance_id, reg.value, None, "error")
        return FeatureRow(rec.utterance_id, reg.value, feats)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, todo))
    return [one(item) for item in todo]
