"""Run configuration and the on-disk pipeline stages.

Each stage reads the previous stage's CSV/JSON artifacts from ``out_dir``
and writes its own. Every artifact embeds the SHA-256 of the resolved run
configuration: CSVs as a leading ``# config_sha256=...`` line, JSON as a
``config_sha256`` field. Reruns with identical inputs are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import acoustics, corpus, dsp, screening, stats, synth
from .audio import load_utterance
from .report import (
    ContrastRow,
    CurvePoint,
    contrast_rows_csv,
    curves_csv,
    emit_table1,
    figure1_csv,
    parse_contrast_rows,
)
from .sslm import (
    SslConfig,
    TrainingItem,
    compare_predictability,
    evaluate_predictability,
    load_checkpoint,
    save_checkpoint,
    train,
    utterance_frames,
)
from .sslm.train import DEFAULT_SCHEDULE, check_schedule

log = logging.getLogger(__name__)

STAGES = ("gen-synth", "snr", "calibrate", "subsets", "features", "contrast", "train", "eval", "report")


class MissingArtifactError(FileNotFoundError):
    def __init__(self, path: Path, stage: str):
        self.stage = stage
        super().__init__(f"missing artifact {path}; run the '{stage}' stage first")


@dataclass(frozen=True)
class RunConfig:
    corpus_name: str = "synth"
    manifest: Optional[str] = None
    audio_root: Optional[str] = None
    train_manifest: Optional[str] = None
    train_audio_root: Optional[str] = None
    out_dir: str = "runs/demo"
    seed: int = 0
    subsets: tuple = ("strict", "relaxed", "snr")
    workers: int = 1
    schedule_minutes: tuple = DEFAULT_SCHEDULE
    screening: screening.ScreeningConfig = field(default_factory=screening.ScreeningConfig)
    f0: dsp.F0Config = field(default_factory=dsp.F0Config)
    ssl: SslConfig = field(default_factory=SslConfig)
    synth: synth.SynthSpec = field(default_factory=synth.SynthSpec)

    def __post_init__(self):
        for name in self.subsets:
            if name not in corpus.SUBSET_NAMES:
                raise ValueError(f"unknown subset {name!r}")
        check_schedule(self.schedule_minutes)

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    @property
    def synth_dir(self) -> Path:
        return self.out / "synth"

    def manifest_path(self) -> Path:
        return Path(self.manifest) if self.manifest else self.synth_dir / "manifest.csv"

    def audio_root_path(self) -> Path:
        if self.audio_root:
            return Path(self.audio_root)
        return self.manifest_path().parent

    def train_manifest_path(self) -> Path:
        return Path(self.train_manifest) if self.train_manifest else self.synth_dir / "train_manifest.csv"

    def train_audio_root_path(self) -> Path:
        if self.train_audio_root:
            return Path(self.train_audio_root)
        return self.train_manifest_path().parent

    def to_json(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["subsets"] = list(self.subsets)
        d["schedule_minutes"] = list(self.schedule_minutes)
        d["screening"] = asdict(self.screening)
        d["f0"] = asdict(self.f0)
        d["ssl"] = self.ssl.to_json()
        d["synth"] = self.synth.to_json()
        return d

    @classmethod
    def from_json(cls, data: dict, base_dir: Optional[Path] = None) -> "RunConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        if "screening" in data:
            data["screening"] = screening.ScreeningConfig(**data["screening"])
        if "f0" in data:
            data["f0"] = dsp.F0Config(**data["f0"])
        if "ssl" in data:
            data["ssl"] = SslConfig(**data["ssl"])
        if "synth" in data:
            data["synth"] = synth.SynthSpec.from_json(data["synth"])
        for key in ("subsets", "schedule_minutes"):
            if key in data:
                data[key] = tuple(data[key])
        if base_dir is not None:
            for key in ("manifest", "audio_root", "train_manifest", "train_audio_root", "out_dir"):
                if data.get(key) and not Path(data[key]).is_absolute():
                    data[key] = str(Path(base_dir) / data[key])
        return cls(**data)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def load_config(path: Optional[str], seed: Optional[int] = None, out: Optional[str] = None) -> RunConfig:
    if path:
        p = Path(path)
        cfg = RunConfig.from_json(json.loads(p.read_text(encoding="utf-8")), base_dir=p.parent)
    else:
        cfg = RunConfig()
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
        overrides["ssl"] = replace(cfg.ssl, seed=seed)
    if out is not None:
        overrides["out_dir"] = out
    return replace(cfg, **overrides) if overrides else cfg


# --- artifact helpers -------------------------------------------------------

def _hash_line(cfg: RunConfig) -> str:
    return f"# config_sha256={cfg.config_hash()}\n"


def _write_csv(cfg: RunConfig, path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_hash_line(cfg) + text, encoding="utf-8")
    return path


def _write_json(cfg: RunConfig, path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"config_sha256": cfg.config_hash(), **payload}
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(path, stage)
    return path


def read_csv_artifact(path: Path) -> str:
    """CSV text with leading ``#`` comment lines removed."""
    lines = path.read_text(encoding="utf-8").splitlines(keepends=True)
    return "".join(line for line in lines if not line.startswith("#"))


def _read_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def _rows(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def _num(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


class Paths:
    def __init__(self, cfg: RunConfig):
        o = cfg.out
        self.snr = o / "snr.csv"
        self.calibration = o / "calibration.json"
        self.subsets = o / "subsets.json"
        self.features = o / "features.csv"
        self.contrasts = o / "contrasts.csv"
        self.checkpoints = o / "checkpoints"
        self.checkpoint_index = o / "checkpoints" / "index.json"
        self.eval = o / "eval.csv"
        self.eval_skipped = o / "eval_skipped.csv"
        self.report = o / "report"


def _manifest(cfg: RunConfig) -> corpus.CorpusManifest:
    path = cfg.manifest_path()
    if not path.exists():
        stage = "gen-synth" if not cfg.manifest else None
        if stage:
            raise MissingArtifactError(path, stage)
        raise FileNotFoundError(f"manifest not found: {path}")
    return corpus.load_manifest(path, corpus_name=cfg.corpus_name)


def _loader(cfg: RunConfig):
    return acoustics.wav_loader(cfg.audio_root_path())


# --- stages ------------------------------------------------------------------

def cmd_gen_synth(cfg: RunConfig) -> dict:
    train_minutes = float(cfg.schedule_minutes[-1])
    return synth.gen_synth(cfg.synth, cfg.seed, cfg.synth_dir, train_minutes=train_minutes)


def cmd_snr(cfg: RunConfig) -> Path:
    manifest = _manifest(cfg)
    load = _loader(cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["utterance_id", "snr_db", "speech_frames", "noise_frames", "status"])
    failures = 0
    for rec in manifest.records:
        try:
            est = screening.estimate_snr(load(rec), rec.utterance_id, cfg.screening)
        except (OSError, ValueError) as exc:
            log.warning("%s: unreadable audio (%s)", rec.utterance_id, exc)
            failures += 1
            est = screening.SnrEstimate(rec.utterance_id, None, 0, 0)
        w.writerow([est.utterance_id, _num(est.snr_db), est.speech_frames, est.noise_frames, est.status])
    if failures:
        log.warning("%d utterances had unreadable audio", failures)
    return _write_csv(cfg, Paths(cfg).snr, buf.getvalue())


def read_snr(path: Path) -> dict[str, screening.SnrEstimate]:
    out = {}
    for r in _rows(read_csv_artifact(path)):
        snr = float(r["snr_db"]) if r["snr_db"] else None
        out[r["utterance_id"]] = screening.SnrEstimate(
            r["utterance_id"], snr, int(r["speech_frames"]), int(r["noise_frames"])
        )
    return out


def cmd_calibrate(cfg: RunConfig) -> Path:
    paths = Paths(cfg)
    manifest = _manifest(cfg)
    estimates = read_snr(_require(paths.snr, "snr"))
    result = screening.calibrate_threshold(screening.calibration_pairs(manifest, estimates))
    return _write_json(cfg, paths.calibration, result.to_json())


def cmd_subsets(cfg: RunConfig) -> Path:
    paths = Paths(cfg)
    manifest = _manifest(cfg)
    estimates = read_snr(_require(paths.snr, "snr"))
    calib = _read_json(_require(paths.calibration, "calibrate"))
    subsets = screening.build_subsets(manifest, estimates, calib["threshold_db"])
    undefined = sorted(uid for uid, e in estimates.items() if e.snr_db is None)
    payload = {
        "threshold_db": calib["threshold_db"],
        "snr_undefined": undefined,
        "subsets": corpus.subsets_to_json({k: subsets[k] for k in cfg.subsets}, manifest),
    }
    return _write_json(cfg, paths.subsets, payload)


def read_subsets(path: Path) -> dict[str, corpus.QualitySubset]:
    return corpus.subsets_from_json(_read_json(path)["subsets"])


def _union_ids(subsets: dict[str, corpus.QualitySubset]) -> frozenset:
    return frozenset().union(*(s.utterance_ids for s in subsets.values())) if subsets else frozenset()


FEATURE_COLUMNS = ["utterance_id", "register", "mean_log_f0", "std_log_f0", "spectral_tilt",
                   "duration_s", "voiced_frames", "status"]


def features_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FEATURE_COLUMNS)
    for row in rows:
        f = row.features
        if f is None:
            w.writerow([row.utterance_id, row.register, "", "", "", "", "", "error"])
        else:
            w.writerow([row.utterance_id, row.register, _num(f.mean_log_f0), _num(f.std_log_f0),
                        _num(f.spectral_tilt), _num(f.duration_s), f.voiced_frame_count, "ok"])
    return buf.getvalue()


def parse_features(text: str) -> list[acoustics.FeatureRow]:
    out = []
    for r in _rows(text):
        if r["status"] != "ok":
            out.append(acoustics.FeatureRow(r["utterance_id"], r["register"], None, "error"))
            continue
        opt = lambda v: float(v) if v else None  # noqa: E731
        feats = acoustics.AcousticFeatures(
            opt(r["mean_log_f0"]), opt(r["std_log_f0"]), float(r["spectral_tilt"]),
            float(r["duration_s"]), int(r["voiced_frames"]),
        )
        out.append(acoustics.FeatureRow(r["utterance_id"], r["register"], feats))
    return out


def cmd_features(cfg: RunConfig) -> Path:
    paths = Paths(cfg)
    manifest = _manifest(cfg)
    subsets = read_subsets(_require(paths.subsets, "subsets"))
    rows = acoustics.batch_features(
        manifest, _union_ids(subsets), _loader(cfg), workers=cfg.workers,
        f0_config=cfg.f0, screening=cfg.screening,
    )
    failed = sum(r.features is None for r in rows)
    if failed:
        log.warning("%d of %d utterances failed feature extraction", failed, len(rows))
    return _write_csv(cfg, paths.features, features_csv(rows))


def compute_contrasts(cfg: RunConfig, rows, subsets) -> list[ContrastRow]:
    out = []
    for name in cfg.subsets:
        members = [r for r in rows if r.utterance_id in subsets[name]]
        for feat in acoustics.FEATURE_NAMES:
            try:
                res = stats.contrast(members, feat)
            except ValueError as exc:
                log.warning("subset %s, %s: %s", name, feat, exc)
                continue
            out.append(ContrastRow.from_result(cfg.corpus_name, name, res))
    return out


def cmd_contrast(cfg: RunConfig) -> Path:
    paths = Paths(cfg)
    subsets = read_subsets(_require(paths.subsets, "subsets"))
    rows = parse_features(read_csv_artifact(_require(paths.features, "features")))
    return _write_csv(cfg, paths.contrasts, contrast_rows_csv(compute_contrasts(cfg, rows, subsets)))


def _checkpoint_name(minutes: float) -> str:
    return f"ckpt_{minutes:09.3f}min.json"


def cmd_train(cfg: RunConfig) -> Path:
    paths = Paths(cfg)
    tpath = cfg.train_manifest_path()
    if not tpath.exists():
        if cfg.train_manifest:
            raise FileNotFoundError(f"training manifest not found: {tpath}")
        raise MissingArtifactError(tpath, "gen-synth")
    tman = corpus.load_manifest(tpath)
    root = cfg.train_audio_root_path()

    def item(rec):
        return TrainingItem(
            rec.utterance_id,
            rec.duration_s / 60.0,
            lambda: utterance_frames(load_utterance(root / rec.audio_path, rec.onset_s, rec.offset_s).samples),
        )

    paths.checkpoints.mkdir(parents=True, exist_ok=True)
    written = []

    def on_checkpoint(model):
        name = _checkpoint_name(cfg.schedule_minutes[len(written)])
        save_checkpoint(model, paths.checkpoints / name)
        written.append({"file": name, "schedule_minutes": cfg.schedule_minutes[len(written)],
                        "trained_minutes": model.trained_minutes})
        log.info("checkpoint %s", name)

    train(cfg.ssl, [item(r) for r in tman.records], cfg.schedule_minutes, on_checkpoint)
    return _write_json(cfg, paths.checkpoint_index, {"checkpoints": written})


def _eval_utterances(cfg: RunConfig, manifest, ids):
    load = _loader(cfg)
    out = []
    for rec, reg in corpus.registered_records(manifest, ids):
        try:
            frames = utterance_frames(load(rec))
        except (OSError, ValueError) as exc:
            log.warning("%s: unreadable audio (%s)", rec.utterance_id, exc)
            continue
        out.append((rec.utterance_id, reg.value, frames))
    return out


def cmd_eval(cfg: RunConfig) -> Path:
    paths = Paths(cfg)
    manifest = _manifest(cfg)
    subsets = read_subsets(_require(paths.subsets, "subsets"))
    index = _read_json(_require(paths.checkpoint_index, "train"))
    utts = _eval_utterances(cfg, manifest, _union_ids(subsets))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["checkpoint_minutes", "utterance_id", "register", "accuracy", "events"])
    skipped = io.StringIO()
    ws = csv.writer(skipped, lineterminator="\n")
    ws.writerow(["checkpoint_minutes", "utterance_id", "reason"])
    for entry in index["checkpoints"]:
        model = load_checkpoint(paths.checkpoints / entry["file"])
        run = evaluate_predictability(model, utts, seed=cfg.seed)
        minutes = entry["schedule_minutes"]
        for r in run.results:
            w.writerow([repr(float(minutes)), r.utterance_id, r.register, repr(r.accuracy), r.n_prediction_events])
        for uid, reason in run.skipped:
            ws.writerow([repr(float(minutes)), uid, reason])
    _write_csv(cfg, paths.eval_skipped, skipped.getvalue())
    return _write_csv(cfg, paths.eval, buf.getvalue())


def curve_points(cfg: RunConfig, eval_rows: list[dict], subsets) -> tuple[list[CurvePoint], list[str]]:
    from .sslm import PredictabilityResult

    by_ckpt: dict[float, list] = {}
    for r in eval_rows:
        by_ckpt.setdefault(float(r["checkpoint_minutes"]), []).append(
            PredictabilityResult(r["utterance_id"], r["register"], float(r["accuracy"]), int(r["events"]))
        )
    points, notes = [], []
    for name in cfg.subsets:
        for minutes in sorted(by_ckpt):
            res = [r for r in by_ckpt[minutes] if r.utterance_id in subsets[name]]
            ids = [r for r in res if r.register == "IDS"]
            ads = [r for r in res if r.register == "ADS"]
            p, star = None, ""
            try:
                contrast_res, too_large = compare_predictability(ids, ads)
                p, star = contrast_res.p_two_sided, contrast_res.stars
                if too_large:
                    notes.append(f"{name} @ {minutes:g} min: IDS-ADS accuracy gap "
                                 f"{contrast_res.ids.mean - contrast_res.ads.mean:+.3f} exceeds 0.1 "
                                 "(outside the range seen for real corpora)")
            except ValueError as exc:
                notes.append(f"{name} @ {minutes:g} min: no comparison ({exc})")
            for reg, group in (("IDS", ids), ("ADS", ads)):
                mean = float(np.mean([r.accuracy for r in group])) if group else math.nan
                points.append(CurvePoint(name, minutes, reg, mean, p, star))
    return points, notes


def cmd_report(cfg: RunConfig) -> Path:
    paths = Paths(cfg)
    manifest = _manifest(cfg)
    subsets = read_subsets(_require(paths.subsets, "subsets"))
    contrasts = parse_contrast_rows(read_csv_artifact(_require(paths.contrasts, "contrast")))
    out = paths.report
    table_csv, table_txt = emit_table1(contrasts)
    _write_csv(cfg, out / "table1.csv", table_csv)
    (out / "table1.txt").write_text(table_txt, encoding="utf-8")
    _write_csv(cfg, out / "contrasts.csv", contrast_rows_csv(contrasts))

    counts = {(cfg.corpus_name, name): corpus.count_by_register(manifest, subsets[name]) for name in cfg.subsets}
    _write_csv(cfg, out / "fig1_counts.csv", figure1_csv(counts))

    summary = [f"corpus: {cfg.corpus_name}", f"config_sha256: {cfg.config_hash()}", ""]
    summary.append("utterances per subset (IDS / ADS):")
    for (_, name), c in counts.items():
        summary.append(f"  {name:8s} {c['IDS']:5d} / {c['ADS']:5d}")
    summary += ["", table_txt]

    if paths.eval.exists():
        points, notes = curve_points(cfg, _rows(read_csv_artifact(paths.eval)), subsets)
        _write_csv(cfg, out / "fig_predictability.csv", curves_csv(points, cfg.subsets, cfg.ssl.chance))
        summary.append(f"predictability: chance level {cfg.ssl.chance:.2f}")
        for pt in points:
            summary.append(f"  {pt.subset:8s} {pt.checkpoint_minutes:8.2f} min  {pt.register}  "
                           f"{pt.mean_accuracy:.4f}  {pt.stars}")
        summary += [f"  note: {n}" for n in notes]
    else:
        summary.append("predictability: no eval.csv (run 'train' and 'eval' to add curves)")
    (out / "summary.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")
    return out


COMMANDS = {
    "gen-synth": cmd_gen_synth,
    "snr": cmd_snr,
    "calibrate": cmd_calibrate,
    "subsets": cmd_subsets,
    "features": cmd_features,
    "contrast": cmd_contrast,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
}
