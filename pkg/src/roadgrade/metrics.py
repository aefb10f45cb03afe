"""Pixel-level and segment-level evaluation of grade masks.

Confusion matrices are indexed ``[ground_truth, prediction]``. All ratios
are computed with exact rational arithmetic and rounded to float once, so
results do not depend on summation order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import ndimage

from .errors import EmptyMatrix, ShapeMismatch, ValidationError
from .labels import BACKGROUND, GRADE_ORDER, Grade
from .skeleton import connected_components, grade_components

CLASS_LABELS = (int(Grade.HIGH), int(Grade.MEDIUM), int(Grade.LOW), BACKGROUND)
CLASS_NAMES = ("high", "medium", "low", "background")
MATCH_RADIUS_PX = 10.0


@dataclass
class ConfusionMatrix:
    counts: np.ndarray
    classes: tuple = CLASS_NAMES

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        k = self.counts.shape[0]
        if self.counts.shape != (k, k):
            raise ValidationError("confusion matrix must be square")
        if (self.counts < 0).any():
            raise ValidationError("confusion counts must be non-negative")
        if len(self.classes) != k:
            self.classes = tuple(f"class{i}" for i in range(k))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts, self.classes)


def _check_shapes(pred, gt) -> tuple:
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"prediction shape {pred.shape} differs from ground truth {gt.shape}")
    return pred, gt


def pixel_confusion(pred, gt, include_background: bool = False) -> ConfusionMatrix:
    """Count (ground truth, prediction) label pairs.

    By default only ground-truth road pixels are counted; predictions of
    background on those pixels land in the background column.
    """
    pred, gt = _check_shapes(pred, gt)
    index = np.full(256, -1, dtype=np.int64)
    for i, lab in enumerate(CLASS_LABELS):
        index[lab] = i
    keep = np.ones(gt.shape, dtype=bool) if include_background else gt != BACKGROUND
    g = index[gt[keep].astype(np.uint8)]
    p = index[pred[keep].astype(np.uint8)]
    k = len(CLASS_LABELS)
    counts = np.bincount(g * k + p, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts)


@dataclass
class ClassMetrics:
    name: str
    support: int
    precision: float | None
    recall: float | None
    f1: float | None
    iou: float | None
    dice: float | None


@dataclass
class MetricReport:
    per_class: list
    oa: float
    miou: float | None
    mean_dice: float | None
    mean_f1: float | None
    kappa: float | None
    total: int
    segacc: float | None = None
    segments: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "oa": self.oa, "miou": self.miou, "mean_dice": self.mean_dice, "mean_f1": self.mean_f1,
            "kappa": self.kappa, "total": self.total, "segacc": self.segacc,
            "per_class": [vars(c) for c in self.per_class],
            "segments": [vars(s) for s in self.segments],
        }


def _ratio(num, den) -> Fraction | None:
    return Fraction(int(num), int(den)) if den else None


def exact_metrics(counts) -> dict:
    """All pixel metrics as Fractions (None where undefined)."""
    cm = np.asarray(counts, dtype=object)
    total = int(sum(int(v) for v in cm.ravel()))
    if total == 0:
        raise EmptyMatrix("confusion matrix has no counts")
    k = cm.shape[0]
    rows = [int(sum(int(v) for v in cm[i, :])) for i in range(k)]
    cols = [int(sum(int(v) for v in cm[:, j])) for j in range(k)]
    diag = [int(cm[i, i]) for i in range(k)]
    per = []
    for i in range(k):
        tp, fp, fn = diag[i], cols[i] - diag[i], rows[i] - diag[i]
        defined = rows[i] > 0
        per.append({
            "support": rows[i],
            "precision": _ratio(tp, cols[i]),
            "recall": _ratio(tp, rows[i]),
            "f1": _ratio(2 * tp, 2 * tp + fp + fn) if defined else None,
            "iou": _ratio(tp, tp + fp + fn) if defined else None,
            "dice": _ratio(2 * tp, 2 * tp + fp + fn) if defined else None,
        })
    po = Fraction(sum(diag), total)
    pe = Fraction(sum(r * c for r, c in zip(rows, cols)), total * total)
    if pe == 1:
        kappa = Fraction(1) if po == 1 else None
    else:
        kappa = (po - pe) / (1 - pe)

    def mean(key):
        vals = [c[key] for c in per if c[key] is not None]
        return sum(vals, Fraction(0)) / len(vals) if vals else None

    return {"per_class": per, "oa": po, "kappa": kappa, "miou": mean("iou"),
            "mean_dice": mean("dice"), "mean_f1": mean("f1"), "total": total}


def _f(x):
    return None if x is None else float(x)


def pixel_metrics(cm) -> MetricReport:
    """Per-class precision/recall/F1/IoU/Dice plus OA, mIoU, mean Dice and kappa.

    Classes without ground-truth support are reported as undefined and left
    out of the means.
    """
    if not isinstance(cm, ConfusionMatrix):
        cm = ConfusionMatrix(cm)
    ex = exact_metrics(cm.counts)
    per = [ClassMetrics(name, c["support"], *(_f(c[k]) for k in ("precision", "recall", "f1", "iou", "dice")))
           for name, c in zip(cm.classes, ex["per_class"])]
    return MetricReport(per, float(ex["oa"]), _f(ex["miou"]), _f(ex["mean_dice"]), _f(ex["mean_f1"]),
                        _f(ex["kappa"]), ex["total"])


@dataclass
class SegmentMatch:
    pred_id: int
    pred_grade: str
    size: int
    centroid: list
    gt_id: int | None
    gt_grade: str | None
    how: str  # "centroid", "nearest" or "unmatched"
    correct: bool


def majority_grade(values) -> int:
    """Most frequent grade label; ties go to the higher grade."""
    counts = np.bincount(np.asarray(values, dtype=np.int64), minlength=4)
    counts[BACKGROUND] = 0
    best = counts.max()
    return next(int(g) for g in GRADE_ORDER if counts[int(g)] == best)


def nearest_road_pixel(road: np.ndarray, pixel, radius: float):
    """Closest road pixel within ``radius``; ties go to the first in row-major order."""
    r, c = pixel
    k = int(math.floor(radius))
    r0, c0 = max(r - k, 0), max(c - k, 0)
    rr, cc = np.nonzero(road[r0:r + k + 1, c0:c + k + 1])
    if len(rr) == 0:
        return None
    rr, cc = rr + r0, cc + c0
    d2 = (rr - r) ** 2 + (cc - c) ** 2
    ok = d2 <= radius * radius
    if not ok.any():
        return None
    order = np.lexsort((cc[ok], rr[ok], d2[ok]))
    return int(rr[ok][order[0]]), int(cc[ok][order[0]])


def segment_accuracy(pred, gt, radius: float = MATCH_RADIUS_PX) -> tuple:
    """Share of predicted road components whose grade matches the ground truth.

    Predicted segments are 8-connected components of predicted road pixels,
    each carrying its majority grade. Ground-truth segments are 8-connected
    runs of a single grade. A predicted segment is matched through the pixel
    at its (rounded) centroid, or failing that the nearest ground-truth road
    pixel within ``radius``; unmatched segments count as wrong.

    Returns ``(segacc, matches)`` with ``segacc`` None when nothing is predicted.
    """
    pred, gt = _check_shapes(pred, gt)
    plab, n = connected_components(pred != BACKGROUND)
    glab, _ = grade_components(gt)
    gt_road = gt != BACKGROUND
    matches = []
    if n == 0:
        return None, matches
    objects = ndimage.find_objects(plab)
    for k in range(1, n + 1):
        sl = objects[k - 1]
        local = plab[sl] == k
        rr, cc = np.nonzero(local)
        rr = rr + sl[0].start
        cc = cc + sl[1].start
        grade = majority_grade(pred[rr, cc])
        cy, cx = rr.mean(), cc.mean()
        r = min(max(int(math.floor(cy + 0.5)), 0), gt.shape[0] - 1)
        c = min(max(int(math.floor(cx + 0.5)), 0), gt.shape[1] - 1)
        gt_id = gt_grade = None
        how = "unmatched"
        if gt_road[r, c]:
            hit, how = (r, c), "centroid"
        else:
            hit = nearest_road_pixel(gt_road, (r, c), radius)
            how = "nearest" if hit is not None else how
        if how != "unmatched":
            gt_id, gt_grade = int(glab[hit]), int(gt[hit])
        matches.append(SegmentMatch(k, Grade(grade).word, int(len(rr)), [float(cy), float(cx)], gt_id,
                                    Grade(gt_grade).word if gt_grade else None, how, gt_grade == grade))
    return sum(m.correct for m in matches) / len(matches), matches


def evaluate(pred, gt, include_background: bool = False) -> MetricReport:
    """Full report: pixel metrics plus segment-level accuracy."""
    report = pixel_metrics(pixel_confusion(pred, gt, include_background))
    report.segacc, report.segments = segment_accuracy(pred, gt)
    return report


def write_report(report: MetricReport, path, csv_path=None) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if csv_path is not None:
        names = ["name", "support", "precision", "recall", "f1", "iou", "dice"]
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=names, lineterminator="\n")
            w.writeheader()
            for c in report.per_class:
                w.writerow({k: ("" if getattr(c, k) is None else getattr(c, k)) for k in names})
