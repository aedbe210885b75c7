"""Precision, recall, F1 and class-wise average F1 reporting.

Any 0/0 ratio is 0 by convention, so degenerate folds produce defined
metrics instead of NaNs.  For binary tasks the positive class is the
health mention (label 1, the minority class of interest).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError


@dataclass
class LabelCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0


@dataclass
class ConfusionCounts:
    """Per-label confusion counts, optionally tagged with a grouping key."""

    counts: dict
    total: int
    group: str | None = None

    @classmethod
    def from_predictions(cls, predictions, labels, n_classes: int, group=None):
        predictions = np.asarray(predictions, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64)
        if predictions.shape != labels.shape:
            raise ContractError("predictions and labels must align")
        counts = {c: LabelCounts() for c in range(n_classes)}
        for c in range(n_classes):
            pred_c = predictions == c
            true_c = labels == c
            counts[c].tp = int(np.sum(pred_c & true_c))
            counts[c].fp = int(np.sum(pred_c & ~true_c))
            counts[c].fn = int(np.sum(~pred_c & true_c))
            counts[c].tn = int(np.sum(~pred_c & ~true_c))
        return cls(counts=counts, total=int(labels.size), group=group)


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


def precision_recall_f1(counts: ConfusionCounts, positive_label: int = 1):
    """(P, R, F1) for one label of a confusion table."""
    c = counts.counts[positive_label]
    precision = _safe_div(c.tp, c.tp + c.fp)
    recall = _safe_div(c.tp, c.tp + c.fn)
    f1 = _safe_div(2.0 * precision * recall, precision + recall)
    return precision, recall, f1


def prf_from_predictions(predictions, labels, n_classes: int, positive_label: int = 1):
    """(P, R, F1): positive-class scores for binary, macro over labels otherwise."""
    counts = ConfusionCounts.from_predictions(predictions, labels, n_classes)
    if n_classes == 2:
        return precision_recall_f1(counts, positive_label)
    per = [precision_recall_f1(counts, c) for c in range(n_classes)]
    return tuple(float(np.mean([p[i] for p in per])) for i in range(3))


def per_label_f1(predictions, labels, n_classes: int):
    """F1 for every label plus the unweighted macro average."""
    counts = ConfusionCounts.from_predictions(predictions, labels, n_classes)
    scores = {c: precision_recall_f1(counts, c)[2] for c in range(n_classes)}
    macro = float(np.mean(list(scores.values())))
    return scores, macro


def classwise_average_f1(
    predictions,
    labels,
    groups,
    n_classes: int = 2,
    positive_label: int = 1,
    group_order=None,
):
    """F1 within each group (e.g. disease) plus the unweighted macro average.

    ``group_order`` optionally fixes which groups to report; groups with no
    examples are excluded with a warning.  Returns (per_group_f1, macro).
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    groups = np.asarray(groups)
    if not (predictions.shape == labels.shape == groups.shape):
        raise ContractError("predictions, labels and groups must align")

    if group_order is None:
        group_order = dict.fromkeys(groups.tolist())  # first-seen order
    per_group = {}
    for name in group_order:
        mask = groups == name
        if not mask.any():
            warnings.warn(f"group {name!r} is empty; excluded from the average")
            continue
        _, _, f1 = prf_from_predictions(
            predictions[mask], labels[mask], n_classes, positive_label
        )
        per_group[name] = f1
    if not per_group:
        return {}, 0.0
    return per_group, float(np.mean(list(per_group.values())))
