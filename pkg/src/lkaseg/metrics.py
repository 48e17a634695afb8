"""Confusion-matrix accumulation and segmentation metrics (F1, IoU, OA)."""

from __future__ import annotations

import json
from typing import Optional, Sequence

import numpy as np


class MetricsError(ValueError):
    pass


class ConfusionMatrix:
    """Square count matrix: rows are ground truth, columns are predictions.

    Pixels labeled ``ignore_label`` in the truth map are never accumulated.
    Accumulation is associative: summing per-batch matrices equals
    accumulating the concatenated batch.
    """

    def __init__(self, num_classes: int, ignore_label: int = 255):
        if num_classes < 1:
            raise MetricsError("num_classes must be positive")
        self.num_classes = num_classes
        self.ignore_label = ignore_label
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    def accumulate(self, predictions: np.ndarray, truth: np.ndarray) -> "ConfusionMatrix":
        predictions = np.asarray(predictions)
        truth = np.asarray(truth)
        if predictions.shape != truth.shape:
            raise MetricsError(f"shape mismatch: {predictions.shape} vs {truth.shape}")
        mask = truth != self.ignore_label
        t = truth[mask].ravel()
        p = predictions[mask].ravel()
        k = self.num_classes
        if t.size and (t.min() < 0 or t.max() >= k):
            raise MetricsError("truth labels out of range")
        if p.size and (p.min() < 0 or p.max() >= k):
            raise MetricsError("predicted labels out of range")
        np.add.at(self.counts, (t, p), 1)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise MetricsError("class count mismatch in merge")
        self.counts += other.counts
        return self

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def class_scores(cm: ConfusionMatrix,
                 class_names: Optional[Sequence[str]] = None,
                 eval_classes: Optional[Sequence[int]] = None) -> dict:
    """Per-class F1/IoU plus mF1, mIoU, and overall accuracy.

    ``eval_classes`` restricts the means to a subset (e.g. foreground-only
    evaluation). Classes with zero support and zero predictions are excluded
    from the means; classes with a zero denominator score 0 and are flagged.
    """
    if cm.total == 0:
        raise MetricsError("empty confusion matrix")
    counts = cm.counts
    k = cm.num_classes
    names = list(class_names) if class_names else [f"class{i}" for i in range(k)]
    if eval_classes is None:
        eval_classes = range(k)

    tp = np.diag(counts).astype(np.float64)
    row = counts.sum(axis=1).astype(np.float64)  # support (FN + TP)
    col = counts.sum(axis=0).astype(np.float64)  # predicted (FP + TP)
    fp = col - tp
    fn = row - tp

    per_class = []
    f1s, ious = [], []
    for c in range(k):
        denom_f1 = 2 * tp[c] + fp[c] + fn[c]
        denom_iou = tp[c] + fp[c] + fn[c]
        degenerate = denom_iou == 0
        f1 = 0.0 if degenerate else 2 * tp[c] / denom_f1
        iou = 0.0 if degenerate else tp[c] / denom_iou
        entry = {
            "name": names[c],
            "index": c,
            "f1": f1,
            "iou": iou,
            "support": int(row[c]),
            "degenerate": bool(degenerate),
        }
        per_class.append(entry)
        if c in eval_classes and not degenerate:
            f1s.append(f1)
            ious.append(iou)

    if not f1s:
        raise MetricsError("no evaluable classes (all degenerate)")
    return {
        "per_class": per_class,
        "mF1": float(np.mean(f1s)),
        "mIoU": float(np.mean(ious)),
        "OA": float(tp.sum() / cm.total),
        "eval_classes": list(eval_classes),
    }


def iou_from_f1(f1: float) -> float:
    """Algebraic identity linking the two scores: IoU = F1 / (2 - F1)."""
    return f1 / (2.0 - f1)


def report_json(scores: dict) -> str:
    """Serialize a score report with percentages at 2 decimals."""
    pct = lambda v: round(100.0 * v, 2)
    out = {
        "per_class": [
            {"name": e["name"], "F1": pct(e["f1"]), "IoU": pct(e["iou"]),
             "support": e["support"], "degenerate": e["degenerate"]}
            for e in scores["per_class"]
        ],
        "mF1": pct(scores["mF1"]),
        "mIoU": pct(scores["mIoU"]),
        "OA": pct(scores["OA"]),
    }
    return json.dumps(out, indent=2)


def report_table(scores: dict) -> str:
    """Aligned text table with per-class scores in paired F1/IoU form."""
    lines = []
    width = max(len(e["name"]) for e in scores["per_class"]) + 2
    lines.append(f"{'class':<{width}}F1/IoU")
    for e in scores["per_class"]:
        pair = f"{100 * e['f1']:.2f}/{100 * e['iou']:.2f}"
        lines.append(f"{e['name']:<{width}}{pair}")
    lines.append(f"{'mF1':<{width}}{100 * scores['mF1']:.2f}")
    lines.append(f"{'mIoU':<{width}}{100 * scores['mIoU']:.2f}")
    lines.append(f"{'OA':<{width}}{100 * scores['OA']:.2f}")
    return "\n".join(lines)
