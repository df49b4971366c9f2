"""Confusion-count accumulation, pixel metrics, ROC curves and AUC.

Counts form a monoid: accumulate per tile, merge in any order, score once at
the end (micro aggregation). A per-image mean mode is provided as well since
published tables rarely say which convention they use.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

THRESHOLD = 0.5  # fixed decision threshold for binary masks everywhere

# Published full-scale scores for this architecture family, kept as reference
# constants only: they need the public road benchmarks and multi-day GPU
# training, and are not reproducible in the desk-scale test profile.
FULL_SCALE_REFERENCES = {
    "rural_total_road_iou": 0.5314,
    "rural_total_f1": 0.6940,
    "deepglobe_road_iou": 0.6905,
    "mosaic_region_road_iou": 0.6019,
    "mosaic_region_f1": 0.4305,
    "mosaic_region_auc": 0.9613,
}


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other):
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


def _check_binary(name, arr):
    arr = np.asarray(arr)
    bad = (arr != 0) & (arr != 1)
    if bad.any():
        raise ValueError(f"{name} must contain only 0/1 values")
    return arr


def accumulate(pred_mask, gt_mask, acc=None):
    """Add the exact pixel comparison of one mask pair into the counts."""
    pred = _check_binary("pred_mask", pred_mask)
    gt = _check_binary("gt_mask", gt_mask)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    pred = pred.astype(bool)
    gt = gt.astype(bool)
    counts = ConfusionCounts(
        tp=int(np.count_nonzero(pred & gt)),
        fp=int(np.count_nonzero(pred & ~gt)),
        fn=int(np.count_nonzero(~pred & gt)),
        tn=int(np.count_nonzero(~pred & ~gt)))
    return counts if acc is None else acc + counts


def _ratio(num, denom, both_empty):
    # Convention for empty denominators: perfect score when neither the
    # prediction nor the ground truth contains any road, zero otherwise.
    if denom == 0:
        return 1.0 if both_empty else 0.0
    return num / denom


def iou(acc):
    return _ratio(acc.tp, acc.tp + acc.fp + acc.fn, acc.tp + acc.fp + acc.fn == 0)


def precision(acc):
    return _ratio(acc.tp, acc.tp + acc.fp, acc.fn == 0)


def recall(acc):
    return _ratio(acc.tp, acc.tp + acc.fn, acc.fp == 0)


def f1(acc):
    p, r = precision(acc), recall(acc)
    if p + r == 0:
        return 1.0 if acc.tp + acc.fp + acc.fn == 0 else 0.0
    return 2.0 * p * r / (p + r)


def scores(acc):
    return {"iou": iou(acc), "precision": precision(acc),
            "recall": recall(acc), "f1": f1(acc)}


def mean_scores(per_image_counts):
    """Per-image mean aggregation over a list of ConfusionCounts."""
    if not per_image_counts:
        raise ValueError("no per-image counts to average")
    keys = ("iou", "precision", "recall", "f1")
    table = [scores(c) for c in per_image_counts]
    return {k: float(np.mean([row[k] for row in table])) for k in keys}


@dataclass
class RocCurve:
    thresholds: np.ndarray  # descending; +/-inf on the appended endpoints
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


def roc_auc(prob_map, gt_mask, n_thresholds=256):
    """Sweep uniform thresholds over [0, 1]; AUC by the trapezoid rule.

    The curve includes the (0, 0) and (1, 1) endpoints. Predictions use
    prob >= threshold.
    """
    if n_thresholds < 2:
        raise ValueError("need at least 2 thresholds")
    prob = np.asarray(prob_map, dtype=np.float64).ravel()
    gt = _check_binary("gt_mask", gt_mask).ravel().astype(bool)
    if prob.shape != gt.shape:
        raise ValueError(f"shapes differ: {prob_map.shape} vs {gt_mask.shape}")
    n_pos = int(gt.sum())
    n_neg = gt.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC undefined: ground truth contains a single class")

    pos = np.sort(prob[gt])
    neg = np.sort(prob[~gt])
    sweep = np.linspace(1.0, 0.0, n_thresholds)
    tp = n_pos - np.searchsorted(pos, sweep, side="left")
    fp = n_neg - np.searchsorted(neg, sweep, side="left")
    tpr = np.concatenate([[0.0], tp / n_pos, [1.0]])
    fpr = np.concatenate([[0.0], fp / n_neg, [1.0]])
    thresholds = np.concatenate([[np.inf], sweep, [-np.inf]])
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(thresholds=thresholds, fpr=fpr, tpr=tpr, auc=auc)


def format_metrics_table(values):
    """Plain-text two-column table."""
    width = max(len(k) for k in values)
    lines = [f"{k.ljust(width)}  {values[k]:.6f}" for k in values]
    return "\n".join(lines) + "\n"


def write_metrics_csv(path, values):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for key, value in values.items():
            writer.writerow([key, f"{value:.10g}"])
    return Path(path)


def write_roc_csv(path, curve):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fpr", "tpr"])
        for t, x, y in zip(curve.thresholds, curve.fpr, curve.tpr):
            writer.writerow([f"{t:.10g}", f"{x:.10g}", f"{y:.10g}"])
    return Path(path)
