"""Classification and detection metrics: accuracy tables, ROC curves, AUC."""

from dataclasses import dataclass

import numpy as np


@dataclass
class RocPoint:
    threshold: float
    fpr: float
    tpr: float


def per_class_accuracy(predictions, labels, n_classes):
    """Per-class correct rate plus overall accuracy.

    Returns (per_class, overall) where per_class[k] is the fraction of
    class-k samples predicted as k, or None when the class has no samples.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels differ in length")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError("label out of range")
    per_class = []
    for k in range(n_classes):
        mask = labels == k
        if not np.any(mask):
            per_class.append(None)
        else:
            per_class.append(float(np.mean(predictions[mask] == k)))
    overall = float(np.mean(predictions == labels)) if labels.size else 0.0
    return per_class, overall


def roc_curve(scores, labels):
    """ROC points from a threshold sweep over the distinct scores.

    Predicts positive when score >= threshold; the sweep starts above the
    largest score (0, 0) and ends at the smallest (1, 1). Needs at least one
    positive and one negative label.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need both positive and negative samples")
    points = [RocPoint(float("inf"), 0.0, 0.0)]
    tp = fp = 0
    order = np.argsort(-scores, kind="stable")
    i = 0
    n = scores.size
    while i < n:
        thr = scores[order[i]]
        while i < n and scores[order[i]] == thr:
            if labels[order[i]] == 1:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append(RocPoint(float(thr), fp / n_neg, tp / n_pos))
    return points


def auc(points):
    """Area under the ROC polyline by the trapezoidal rule."""
    area = 0.0
    for prev, cur in zip(points, points[1:]):
        area += (cur.fpr - prev.fpr) * (cur.tpr + prev.tpr) / 2.0
    return area


def format_accuracy_table(per_class, overall, class_names):
    """Aligned text table, one row per category plus an overall row."""
    width = max(len(name) for name in class_names + ["Overall"])
    lines = []
    for name, acc in zip(class_names, per_class):
        shown = "-" if acc is None else f"{100.0 * acc:.1f}%"
        lines.append(f"{name:<{width}}  {shown}")
    lines.append(f"{'Overall':<{width}}  {100.0 * overall:.1f}%")
    return "\n".join(lines)


def detection_report_rows(result, class_names, background_class=0):
    """(name, accuracy-or-None) rows per disease class plus a Total row."""
    rows = []
    for k, name in enumerate(class_names):
        if k == background_class:
            continue
        rows.append((name, result.accuracy(k)))
    rows.append(("Total", result.total_accuracy))
    return rows


def format_detection_report(result, class_names, background_class=0):
    rows = detection_report_rows(result, class_names, background_class)
    width = max(len(name) for name, _ in rows)
    lines = []
    for name, acc in rows:
        shown = "-" if acc is None else f"{100.0 * acc:.1f}%"
        lines.append(f"{name:<{width}}  {shown}")
    return "\n".join(lines)
