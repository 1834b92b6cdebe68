"""Utterance manifests: parsing, validation, register assignment and subsets.

A manifest is a UTF-8 CSV with one row per annotated utterance::

    utterance_id,audio_path,onset_s,offset_s,speaker_role,addressee,manual_quality

``manual_quality`` may be empty for unlabelled rows.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional

MANIFEST_COLUMNS = (
    "utterance_id",
    "audio_path",
    "onset_s",
    "offset_s",
    "speaker_role",
    "addressee",
    "manual_quality",
)

SPEAKER_ROLES = ("adult_female", "adult_male", "child", "other")
ADDRESSEES = ("infant", "adult", "other")
QUALITY_LABELS = ("good", "medium", "bad")
SUBSET_NAMES = ("strict", "relaxed", "snr")


class ManifestError(ValueError):
    """Raised for malformed manifests. Carries the 1-based CSV line number."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class Register(str, Enum):
    IDS = "IDS"
    ADS = "ADS"


@dataclass(frozen=True)
class UtteranceRecord:
    utterance_id: str
    audio_path: str
    onset_s: float
    offset_s: float
    speaker_role: str
    addressee: str
    manual_quality: Optional[str] = None

    def __post_init__(self):
        if not self.utterance_id:
            raise ManifestError("utterance_id must be non-empty", column="utterance_id")
        if self.onset_s < 0:
            raise ManifestError(f"onset_s must be >= 0, got {self.onset_s}", column="onset_s")
        if not self.offset_s > self.onset_s:
            raise ManifestError(
                f"offset_s ({self.offset_s}) must be greater than onset_s ({self.onset_s})",
                column="offset_s",
            )
        if self.speaker_role not in SPEAKER_ROLES:
            raise ManifestError(f"unknown speaker_role {self.speaker_role!r}", column="speaker_role")
        if self.addressee not in ADDRESSEES:
            raise ManifestError(f"unknown addressee {self.addressee!r}", column="addressee")
        if self.manual_quality is not None and self.manual_quality not in QUALITY_LABELS:
            raise ManifestError(
                f"unknown manual_quality {self.manual_quality!r}", column="manual_quality"
            )

    @property
    def duration_s(self) -> float:
        return self.offset_s - self.onset_s


@dataclass(frozen=True)
class CorpusManifest:
    corpus_name: str
    records: tuple[UtteranceRecord, ...]
    sample_rate_hz: int = 16000

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.utterance_id in seen:
                raise ManifestError(f"duplicate utterance_id {rec.utterance_id!r}")
            seen.add(rec.utterance_id)
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self) -> dict[str, UtteranceRecord]:
        return {r.utterance_id: r for r in self.records}

    def ids(self) -> list[str]:
        return [r.utterance_id for r in self.records]

    def missing_audio(self, audio_root: Path) -> list[str]:
        """Ids whose audio file does not exist under ``audio_root``."""
        root = Path(audio_root)
        return [r.utterance_id for r in self.records if not (root / r.audio_path).is_file()]


@dataclass(frozen=True)
class QualitySubset:
    name: str
    utterance_ids: frozenset[str]
    rule: str = ""

    def __post_init__(self):
        if self.name not in SUBSET_NAMES:
            raise ValueError(f"unknown subset name {self.name!r}")

    def __contains__(self, utterance_id: str) -> bool:
        return utterance_id in self.utterance_ids

    def __len__(self) -> int:
        return len(self.utterance_ids)


def _parse_float(value: str, row: int, column: str) -> float:
    try:
        out = float(value)
    except ValueError:
        raise ManifestError(f"not a decimal number: {value!r}", row=row, column=column) from None
    if out != out or out in (float("inf"), float("-inf")):
        raise ManifestError(f"not a finite number: {value!r}", row=row, column=column)
    return out


def parse_manifest(text: str, corpus_name: str = "corpus", sample_rate_hz: int = 16000) -> CorpusManifest:
    """Parse manifest CSV text. Errors name the offending line and column."""
    reader = csv.reader(io.StringIO(text.lstrip("﻿")))
    try:
        header = next(reader)
    except StopIteration:
        raise ManifestError("empty manifest: header row required", row=1) from None
    header = [h.strip() for h in header]
    if tuple(header) != MANIFEST_COLUMNS:
        raise ManifestError(
            f"header must be {','.join(MANIFEST_COLUMNS)!r}, got {','.join(header)!r}", row=1
        )

    records = []
    seen: dict[str, int] = {}
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(MANIFEST_COLUMNS):
            raise ManifestError(
                f"expected {len(MANIFEST_COLUMNS)} columns, got {len(row)}", row=line
            )
        cells = dict(zip(MANIFEST_COLUMNS, (c.strip() for c in row)))
        uid = cells["utterance_id"]
        if uid in seen:
            raise ManifestError(
                f"duplicate utterance_id {uid!r} (first seen on row {seen[uid]})",
                row=line,
                column="utterance_id",
            )
        seen[uid] = line
        onset = _parse_float(cells["onset_s"], line, "onset_s")
        offset = _parse_float(cells["offset_s"], line, "offset_s")
        try:
            rec = UtteranceRecord(
                utterance_id=uid,
                audio_path=cells["audio_path"],
                onset_s=onset,
                offset_s=offset,
                speaker_role=cells["speaker_role"],
                addressee=cells["addressee"],
                manual_quality=cells["manual_quality"] or None,
            )
        except ManifestError as exc:
            raise ManifestError(str(exc).split(": ", 1)[-1], row=line, column=exc.column) from None
        if not rec.audio_path:
            raise ManifestError("audio_path must be non-empty", row=line, column="audio_path")
        records.append(rec)
    return CorpusManifest(corpus_name=corpus_name, records=tuple(records), sample_rate_hz=sample_rate_hz)


def _fmt_time(value: float) -> str:
    return repr(float(value))


def serialize_manifest(manifest: CorpusManifest) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_COLUMNS)
    for r in manifest.records:
        writer.writerow(
            [
                r.utterance_id,
                r.audio_path,
                _fmt_time(r.onset_s),
                _fmt_time(r.offset_s),
                r.speaker_role,
                r.addressee,
                r.manual_quality or "",
            ]
        )
    return buf.getvalue()


def load_manifest(path, corpus_name: Optional[str] = None, sample_rate_hz: int = 16000) -> CorpusManifest:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_manifest(text, corpus_name=corpus_name or path.stem, sample_rate_hz=sample_rate_hz)


def write_manifest(manifest: CorpusManifest, path) -> None:
    Path(path).write_text(serialize_manifest(manifest), encoding="utf-8")


def assign_register(record: UtteranceRecord) -> Optional[Register]:
    """IDS for adult speaker to infant, ADS for adult to adult, otherwise None."""
    if record.speaker_role not in ("adult_female", "adult_male"):
        return None
    if record.addressee == "infant":
        return Register.IDS
    if record.addressee == "adult":
        return Register.ADS
    return None


def count_by_register(
    manifest: CorpusManifest, subset: Optional[QualitySubset] = None
) -> dict[str, int]:
    counts = {Register.IDS.value: 0, Register.ADS.value: 0}
    if subset is not None:
        known = set(manifest.ids())
        unknown = sorted(subset.utterance_ids - known)
        if unknown:
            raise ManifestError(
                f"subset {subset.name!r} has ids not in manifest: {', '.join(unknown)}"
            )
    for rec in manifest.records:
        if subset is not None and rec.utterance_id not in subset:
            continue
        reg = assign_register(rec)
        if reg is not None:
            counts[reg.value] += 1
    return counts


def manual_subsets(manifest: CorpusManifest) -> tuple[QualitySubset, QualitySubset]:
    """The strict (good) and relaxed (good or medium) subsets from manual labels."""
    good = frozenset(r.utterance_id for r in manifest.records if r.manual_quality == "good")
    relaxed = frozenset(
        r.utterance_id for r in manifest.records if r.manual_quality in ("good", "medium")
    )
    return (
        QualitySubset("strict", good, rule="manual_quality == good"),
        QualitySubset("relaxed", relaxed, rule="manual_quality in {good, medium}"),
    )


def subsets_to_json(subsets: Mapping[str, QualitySubset], manifest: CorpusManifest) -> dict:
    """JSON-ready view; ids listed in manifest order."""
    order = manifest.ids()
    return {
        name: {
            "rule": s.rule,
            "utterance_ids": [uid for uid in order if uid in s.utterance_ids],
        }
        for name, s in subsets.items()
    }


def subsets_from_json(data: Mapping[str, dict]) -> dict[str, QualitySubset]:
    return {
        name: QualitySubset(name, frozenset(body["utterance_ids"]), rule=body.get("rule", ""))
        for name, body in data.items()
    }


def registered_records(
    manifest: CorpusManifest, ids: Optional[Iterable[str]] = None
) -> list[tuple[UtteranceRecord, Register]]:
    """(record, register) pairs in manifest order, optionally restricted to ``ids``."""
    wanted = None if ids is None else set(ids)
    out = []
    for rec in manifest.records:
        if wanted is not None and rec.utterance_id not in wanted:
            continue
        reg = assign_register(rec)
        if reg is not None:
            out.append((rec, reg))
    return out
