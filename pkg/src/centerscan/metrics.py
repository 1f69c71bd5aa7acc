"""Overlap metrics for binary segmentation masks.

All four metrics derive from pooled true/false positive/negative
counts. Dice is computed as 2*iou/(1+iou) so the identity between the
two holds exactly on every report. The degenerate empty-vs-empty case
scores 1.0 across the board; other zero-denominator cases score 0.0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MetricReport:
    dice: float
    iou: float
    precision: float
    sensitivity: float
    tp: int
    fp: int
    fn: int

    def row(self):
        return {"dice": self.dice, "iou": self.iou,
                "precision": self.precision, "sensitivity": self.sensitivity}


def _ratio(num, den, empty_value):
    if den == 0:
        return empty_value
    return num / den


def report_from_counts(tp: int, fp: int, fn: int) -> MetricReport:
    both_empty = (tp + fp + fn) == 0
    degenerate = 1.0 if both_empty else 0.0
    iou = _ratio(tp, tp + fp + fn, degenerate)
    dice = _ratio(2.0 * iou, 1.0 + iou, degenerate) if not both_empty else 1.0
    precision = _ratio(tp, tp + fp, degenerate)
    sensitivity = _ratio(tp, tp + fn, degenerate)
    return MetricReport(dice=dice, iou=iou, precision=precision,
                        sensitivity=sensitivity, tp=tp, fp=fp, fn=fn)


def compute_metrics(pred_masks, gt_masks) -> MetricReport:
    pred = np.asarray(pred_masks)
    gt = np.asarray(gt_masks)
    if pred.shape != gt.shape:
        raise ValueError(f"compute_metrics: shape mismatch {pred.shape} vs {gt.shape}")
    pred = pred.astype(bool)
    gt = gt.astype(bool)
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    return report_from_counts(tp, fp, fn)


def pool_reports(reports) -> MetricReport:
    """Micro-average: metrics recomputed from summed counts."""
    reports = list(reports)
    if not reports:
        raise ValueError("pool_reports: no reports to pool")
    return report_from_counts(
        sum(r.tp for r in reports),
        sum(r.fp for r in reports),
        sum(r.fn for r in reports),
    )


def mean_sd(values):
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("mean_sd: empty")
    sd = arr.std(ddof=1) if arr.size > 1 else 0.0
    return float(arr.mean()), float(sd)
