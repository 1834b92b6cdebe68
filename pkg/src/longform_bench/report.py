"""IDS/ADS contrast tables and plot-ready figure data."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .acoustics import FEATURE_NAMES
from .stats import ALPHA, ContrastResult

FEATURE_TITLES = {
    "mean_log_f0": "mean(log-F0)",
    "std_log_f0": "std(log-F0)",
    "spectral_tilt": "Spectral Tilt",
    "duration_s": "Duration (s)",
}


@dataclass(frozen=True)
class ContrastRow:
    corpus: str
    subset: str
    feature: str
    ids_mean: float
    ads_mean: float
    cohens_d: float
    p: float
    stars: str
    larger_group: str

    @classmethod
    def from_result(cls, corpus: str, subset: str, res: ContrastResult) -> "ContrastRow":
        return cls(corpus, subset, res.feature_name, res.ids.mean, res.ads.mean,
                   res.cohens_d, res.p_two_sided, res.stars, res.larger_group)


def _cells(row: ContrastRow) -> tuple[str, str, str]:
    ids = f"{row.ids_mean:.2f}"
    ads = f"{row.ads_mean:.2f}"
    if row.larger_group == "IDS":
        ids = f"**{ids}**"
    elif row.larger_group == "ADS":
        ads = f"**{ads}**"
    d = f"{row.cohens_d:.2f}" + ("*" if row.p < ALPHA else "")
    return ids, ads, d


def _table1_rows(contrasts: Iterable[ContrastRow], features: Sequence[str]):
    grouped: dict[tuple[str, str], dict[str, ContrastRow]] = {}
    for row in contrasts:
        grouped.setdefault((row.corpus, row.subset), {})[row.feature] = row
    out = []
    for (corpus, subset), by_feat in grouped.items():
        cells = [corpus, subset]
        for feat in features:
            cells.extend(_cells(by_feat[feat]) if feat in by_feat else ("", "", ""))
        out.append(cells)
    return out


def emit_table1(contrasts: Iterable[ContrastRow], features: Sequence[str] = FEATURE_NAMES) -> tuple[str, str]:
    """(csv_text, aligned_text) with one row per corpus × subset.

    Each feature contributes IDS, ADS and d cells. d carries ``*`` when
    p < 0.05; the larger mean of a significant contrast is wrapped in ``**``.
    """
    contrasts = list(contrasts)
    rows = _table1_rows(contrasts, features)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["corpus", "subset"]
    for feat in features:
        header += [f"{feat}_ids", f"{feat}_ads", f"{feat}_d"]
    w.writerow(header)
    w.writerows(rows)

    lead = [max([len("corpus")] + [len(r[0]) for r in rows]), max([len("subset")] + [len(r[1]) for r in rows])]
    groups = []
    for i, feat in enumerate(features):
        cols = [r[2 + 3 * i : 5 + 3 * i] for r in rows]
        widths = [max([3] + [len(c[j]) for c in cols]) for j in range(3)]
        span = sum(widths) + 4
        title = FEATURE_TITLES.get(feat, feat)
        if len(title) > span:
            widths[-1] += len(title) - span
            span = len(title)
        groups.append((title, widths, span))

    lines = []
    top = " " * (lead[0] + 2 + lead[1])
    for title, _, span in groups:
        top += " | " + title.center(span)
    lines.append(top.rstrip())
    sub = "corpus".ljust(lead[0]) + "  " + "subset".ljust(lead[1])
    for _, widths, _ in groups:
        sub += " | " + "  ".join(h.rjust(wd) for h, wd in zip(("IDS", "ADS", "d"), widths))
    lines.append(sub.rstrip())
    lines.append("-" * len(sub))
    for r in rows:
        line = r[0].ljust(lead[0]) + "  " + r[1].ljust(lead[1])
        for i, (_, widths, _) in enumerate(groups):
            line += " | " + "  ".join(c.rjust(wd) for c, wd in zip(r[2 + 3 * i : 5 + 3 * i], widths))
        lines.append(line.rstrip())
    lines.append("")
    lines.append("d = Cohen's d; * p < 0.05 (Welch t-test); **x** = larger value of a significant contrast")
    return buf.getvalue(), "\n".join(lines) + "\n"


def contrast_rows_csv(rows: Iterable[ContrastRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["corpus", "subset", "feature", "ids_mean", "ads_mean", "cohens_d", "p", "stars", "larger_group"])
    for r in rows:
        w.writerow([r.corpus, r.subset, r.feature, repr(r.ids_mean), repr(r.ads_mean),
                    repr(r.cohens_d), repr(r.p), r.stars, r.larger_group])
    return buf.getvalue()


def parse_contrast_rows(text: str) -> list[ContrastRow]:
    reader = csv.DictReader(io.StringIO(text))
    return [
        ContrastRow(r["corpus"], r["subset"], r["feature"], float(r["ids_mean"]), float(r["ads_mean"]),
                    float(r["cohens_d"]), float(r["p"]), r["stars"], r["larger_group"])
        for r in reader
    ]


def figure1_csv(counts: Mapping[tuple[str, str], Mapping[str, int]]) -> str:
    """``counts[(corpus, subset)] = {"IDS": n, "ADS": n}`` as long-format rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["corpus", "subset", "register", "count"])
    for (corpus, subset), by_reg in counts.items():
        for reg in ("IDS", "ADS"):
            w.writerow([corpus, subset, reg, by_reg.get(reg, 0)])
    return buf.getvalue()


@dataclass(frozen=True)
class CurvePoint:
    subset: str
    checkpoint_minutes: float
    register: str
    mean_accuracy: float
    p: Optional[float]
    stars: str


def curves_csv(points: Iterable[CurvePoint], subsets: Sequence[str], chance: float) -> str:
    """Accuracy curves plus one chance reference row per subset."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subset", "checkpoint_minutes", "register", "mean_accuracy", "p", "stars"])
    for pt in points:
        w.writerow([pt.subset, repr(pt.checkpoint_minutes), pt.register, repr(pt.mean_accuracy),
                    "" if pt.p is None else repr(pt.p), pt.stars])
    for subset in subsets:
        w.writerow([subset, "", "chance", repr(chance), "", ""])
    return buf.getvalue()
