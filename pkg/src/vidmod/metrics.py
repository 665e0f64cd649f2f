"""Classification metrics and inter-annotator agreement.

Confusion matrices are K x K integer arrays with rows = gold class and
columns = predicted class, in LabelClass ordinal order. Per-class
precision/recall/F1 with an empty denominator count as 0 in the macro
average (strict convention).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EmptyMatrix(ValueError):
    pass


class RowSumMismatch(ValueError):
    pass


@dataclass(frozen=True)
class PRFResult:
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float
    per_class_precision: tuple[float, ...]
    per_class_recall: tuple[float, ...]
    per_class_f1: tuple[float, ...]


def confusion_matrix(gold, predicted, num_classes: int) -> np.ndarray:
    """Count (gold, predicted) pairs into a num_classes x num_classes matrix."""
    gold = np.asarray(gold, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if gold.shape != predicted.shape:
        raise ValueError("gold and predicted must have the same length")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (gold, predicted), 1)
    return cm


def macro_prf(cm) -> PRFResult:
    """Macro precision/recall/F1 and accuracy from a confusion matrix."""
    cm = np.asarray(cm, dtype=np.float64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError("confusion matrix must be square")
    total = cm.sum()
    if total <= 0:
        raise EmptyMatrix("confusion matrix has no observations")

    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp

    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2.0 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)

    return PRFResult(
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        accuracy=float(tp.sum() / total),
        per_class_precision=tuple(float(x) for x in precision),
        per_class_recall=tuple(float(x) for x in recall),
        per_class_f1=tuple(float(x) for x in f1),
    )


def cohen_kappa(table) -> float:
    """Chance-corrected agreement for two raters from a K x K pair-count table."""
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] != table.shape[1]:
        raise ValueError("pair-count table must be square")
    total = table.sum()
    if total <= 0:
        raise EmptyMatrix("pair-count table has no observations")
    p_o = np.trace(table) / total
    row = table.sum(axis=1) / total
    col = table.sum(axis=0) / total
    p_e = float(np.dot(row, col))
    if p_e >= 1.0:
        # Degenerate: every rating lands in one cell; perfect observed
        # agreement still counts as 1.
        return 1.0 if p_o >= 1.0 else 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def fleiss_kappa(table, n_raters: int) -> float:
    """Fleiss' kappa from an N x K matrix of per-item category counts.

    Every item must have exactly ``n_raters`` ratings.
    """
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] < 1:
        raise ValueError("ratings table must be a non-empty 2-d array")
    if n_raters < 2:
        raise ValueError("need at least 2 raters")
    row_sums = table.sum(axis=1)
    bad = np.nonzero(row_sums != n_raters)[0]
    if bad.size:
        raise RowSumMismatch(
            f"item {int(bad[0])} has {row_sums[bad[0]]:.0f} ratings, expected {n_raters}"
        )
    n_items = table.shape[0]
    p_i = ((table * (table - 1)).sum(axis=1)) / (n_raters * (n_raters - 1))
    p_bar = float(p_i.mean())
    p_j = table.sum(axis=0) / (n_items * n_raters)
    p_e = float((p_j**2).sum())
    if p_e >= 1.0:
        return 1.0 if p_bar >= 1.0 else 0.0
    return float((p_bar - p_e) / (1.0 - p_e))


def fleiss_table(ratings: list[list[int]], num_classes: int) -> np.ndarray:
    """Per-item category-count matrix from raw rating lists (one list per item)."""
    table = np.zeros((len(ratings), num_classes), dtype=np.int64)
    for i, item_ratings in enumerate(ratings):
        for r in item_ratings:
            table[i, r] += 1
    return table


def pair_table(rater_a: list[int], rater_b: list[int], num_classes: int) -> np.ndarray:
    """K x K pair-count table for two raters over the same items."""
    if len(rater_a) != len(rater_b):
        raise ValueError("raters must rate the same items")
    table = np.zeros((num_classes, num_classes), dtype=np.int64)
    for a, b in zip(rater_a, rater_b):
        table[a, b] += 1
    return table
