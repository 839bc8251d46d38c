"""ROC curves, AUC, and reader operating-point comparison.

AUC is computed from integer true/false-positive counts accumulated over
tie-grouped thresholds, then divided once, so the trapezoidal area equals
the tie-corrected pairwise ranking statistic to the last bit.  Reader
comparison counts operating points lying strictly below the linearly
interpolated curve; ties sit on the curve and do not count.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataFormatError

# Default label subset for the summary mean: the five standard
# chest-observation pathologies reported by the benchmark.
DEFAULT_AUC_SUBSET = (
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Pleural Effusion",
)


@dataclass(frozen=True)
class RocCurve:
    """Threshold-sweep curve, anchored at (0,0) and (1,1)."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # score cut for each interior point, NaN at anchors

    def __post_init__(self):
        if np.any(np.diff(self.fpr) < 0) or np.any(np.diff(self.tpr) < 0):
            raise ValueError("ROC points must be non-decreasing in both axes")

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


@dataclass(frozen=True)
class OperatingPoint:
    """A single reader's (fpr, tpr) decision point."""

    fpr: float
    tpr: float
    reader: str = ""

    def __post_init__(self):
        if not (0.0 <= self.fpr <= 1.0 and 0.0 <= self.tpr <= 1.0):
            raise ValueError(
                f"operating point ({self.fpr}, {self.tpr}) outside the unit square"
            )


@dataclass
class EvalReport:
    """Per-label AUCs plus the subset mean and reader comparison counts."""

    per_label_auc: dict[str, float]
    mean_auc_selected: float
    subset: tuple[str, ...]
    readers_below: dict[str, int]
    mean_readers_below: float


def _binary_counts(
    scores: np.ndarray, labels: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int, int]:
    """Cumulative (tp, fp) after each tie group of descending scores."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be matching 1-D arrays")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be binary 0/1")
    n_pos = int((labels == 1).sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError(
            f"need both classes to sweep a curve, got {n_pos} positives and "
            f"{n_neg} negatives"
        )
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order] == 1
    # last position of each tie group
    group_end = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    tp = np.cumsum(y)[group_end]
    fp = np.cumsum(~y)[group_end]
    return tp, fp, s[group_end], n_pos, n_neg


def roc_curve(scores: np.ndarray, labels: np.ndarray) -> RocCurve:
    """Sweep all distinct score thresholds, grouping ties."""
    tp, fp, cuts, n_pos, n_neg = _binary_counts(scores, labels)
    fpr = np.concatenate(([0.0], fp / n_neg))
    tpr = np.concatenate(([0.0], tp / n_pos))
    thresholds = np.concatenate(([np.nan], cuts))
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds)


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Trapezoidal area under the ROC curve.

    Accumulated as twice the area in integer count space, then divided by
    2 * n_pos * n_neg, which makes the result equal to the pairwise
    statistic P(pos ranked above neg) + P(tie)/2 exactly.
    """
    tp, fp, _, n_pos, n_neg = _binary_counts(scores, labels)
    tp_prev = np.concatenate(([0], tp[:-1]))
    fp_prev = np.concatenate(([0], fp[:-1]))
    # Python ints: exact
    twice_area = int(np.sum((fp - fp_prev) * (tp + tp_prev), dtype=np.int64))
    return twice_area / (2 * n_pos * n_neg)


def mean_auc(
    per_label_auc: Mapping[str, float], subset: Sequence[str] = DEFAULT_AUC_SUBSET
) -> float:
    """Unweighted mean AUC over a label subset."""
    if not subset:
        raise ValueError("label subset must be non-empty")
    missing = [name for name in subset if name not in per_label_auc]
    if missing:
        raise ValueError(f"no AUC for label(s) {missing}")
    return float(np.mean([per_label_auc[name] for name in subset]))


def curve_tpr_at(curve: RocCurve, fpr: float) -> float:
    """Upper envelope of the curve at an fpr, linearly interpolated.

    Vertical segments (repeated fpr values) contribute their topmost tpr.
    """
    keep_last = np.append(curve.fpr[1:] != curve.fpr[:-1], True)
    return float(np.interp(fpr, curve.fpr[keep_last], curve.tpr[keep_last]))


def readers_below(curve: RocCurve, points: Sequence[OperatingPoint]) -> int:
    """Operating points strictly below the curve; ties are not below."""
    return sum(1 for p in points if p.tpr < curve_tpr_at(curve, p.fpr))


def reader_study(
    scores_by_label: Mapping[str, np.ndarray],
    labels_by_label: Mapping[str, np.ndarray],
    points_by_label: Mapping[str, Sequence[OperatingPoint]] | None = None,
    subset: Sequence[str] | None = None,
) -> EvalReport:
    """Per-label ROC analysis with reader comparison.

    ``mean_readers_below`` averages the below-curve counts over all
    evaluated labels (labels without supplied points count 0).  The
    summary ``mean_auc_selected`` uses ``subset`` when given, the default
    pathology subset when fully present, and all labels otherwise.
    """
    points_by_label = points_by_label or {}
    names = list(scores_by_label)
    if set(names) != set(labels_by_label):
        raise ValueError("scores and ground-truth label sets disagree")
    per_label_auc: dict[str, float] = {}
    below: dict[str, int] = {}
    for name in names:
        curve = roc_curve(scores_by_label[name], labels_by_label[name])
        per_label_auc[name] = auc(scores_by_label[name], labels_by_label[name])
        below[name] = readers_below(curve, points_by_label.get(name, ()))
    if subset is None:
        subset = (
            DEFAULT_AUC_SUBSET
            if all(name in per_label_auc for name in DEFAULT_AUC_SUBSET)
            else tuple(names)
        )
    return EvalReport(
        per_label_auc=per_label_auc,
        mean_auc_selected=mean_auc(per_label_auc, subset),
        subset=tuple(subset),
        readers_below=below,
        mean_readers_below=float(np.mean([below[name] for name in names])),
    )


# ---------------------------------------------------------------------------
# File formats.  Predictions: CSV id + one probability column per label.
# Ground truth: CSV id + one 0/1 column per label.  Reader points: CSV
# label,reader,fpr,tpr.


def write_predictions_csv(
    path: str | Path,
    ids: Sequence[str],
    probs: np.ndarray,
    label_names: Sequence[str],
) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id"] + list(label_names))
        for i, row_id in enumerate(ids):
            writer.writerow([row_id] + [repr(float(p)) for p in probs[i]])


def load_predictions_csv(
    path: str | Path,
) -> tuple[tuple[str, ...], np.ndarray, tuple[str, ...]]:
    """Returns (ids, probability matrix, label names)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if not header or header[0] != "id":
            raise DataFormatError(f"{path}: predictions file must start with an id column")
        names = tuple(header[1:])
        ids, rows = [], []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}:{line}: expected {len(header)} cells, got {len(row)}"
                )
            ids.append(row[0])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise DataFormatError(f"{path}:{line}: unparsable probability") from None
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return tuple(ids), np.array(rows, dtype=np.float64), names


def load_operating_points(path: str | Path) -> dict[str, list[OperatingPoint]]:
    """Reader-points CSV: columns label, reader, fpr, tpr."""
    path = Path(path)
    points: dict[str, list[OperatingPoint]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"label", "reader", "fpr", "tpr"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DataFormatError(
                f"{path}: reader-points file needs columns label,reader,fpr,tpr"
            )
        for line, row in enumerate(reader, start=2):
            try:
                point = OperatingPoint(
                    fpr=float(row["fpr"]), tpr=float(row["tpr"]), reader=row["reader"]
                )
            except ValueError as exc:
                raise DataFormatError(f"{path}:{line}: {exc}") from exc
            points.setdefault(row["label"], []).append(point)
    return points


def write_roc_points_csv(path: str | Path, curve: RocCurve) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["fpr", "tpr", "threshold"])
        for f, t, c in zip(curve.fpr, curve.tpr, curve.thresholds):
            writer.writerow([repr(float(f)), repr(float(t)), "" if np.isnan(c) else repr(float(c))])


def write_report(report: EvalReport, txt_path: str | Path, csv_path: str | Path) -> None:
    """Emit the report as aligned text and as machine-readable CSV."""
    lines = ["label                        auc  readers_below"]
    for name in report.per_label_auc:
        lines.append(
            f"{name:<26} {report.per_label_auc[name]:.6f}  {report.readers_below[name]}"
        )
    lines.append("")
    lines.append(f"mean_auc_selected ({', '.join(report.subset)}): "
                 f"{report.mean_auc_selected:.6f}")
    lines.append(f"mean_readers_below: {report.mean_readers_below:.6f}")
    Path(txt_path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    with Path(csv_path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", "auc", "readers_below"])
        for name in report.per_label_auc:
            writer.writerow(
                [name, repr(report.per_label_auc[name]), report.readers_below[name]]
            )
        writer.writerow(["mean_auc_selected", repr(report.mean_auc_selected), ""])
        writer.writerow(["mean_readers_below", repr(report.mean_readers_below), ""])
