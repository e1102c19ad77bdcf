"""Classification metrics: Macro-F1, Micro-F1, Average Precision.

Implemented from global/per-class counts so the test oracles can be plain
hand-counted confusion matrices and ranked lists.
"""
from __future__ import annotations

import numpy as np


class EmptySplitError(ValueError):
    pass


def _per_class_counts(y_true, y_pred, num_classes):
    tp = np.zeros(num_classes, dtype=np.int64)
    fp = np.zeros(num_classes, dtype=np.int64)
    fn = np.zeros(num_classes, dtype=np.int64)
    for c in range(num_classes):
        t = y_true == c
        p = y_pred == c
        tp[c] = int(np.sum(t & p))
        fp[c] = int(np.sum(~t & p))
        fn[c] = int(np.sum(t & ~p))
    return tp, fp, fn


def _multilabel_counts(y_true, y_pred):
    t = y_true.astype(bool)
    p = y_pred.astype(bool)
    tp = (t & p).sum(axis=0)
    fp = (~t & p).sum(axis=0)
    fn = (t & ~p).sum(axis=0)
    return tp, fp, fn


def _counts(y_true, y_pred, num_classes):
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.size == 0:
        raise EmptySplitError("no rows to score")
    if y_true.ndim == 2:
        return _multilabel_counts(y_true, y_pred)
    return _per_class_counts(y_true, y_pred, num_classes)


def macro_f1(y_true, y_pred, num_classes):
    """Unweighted mean of per-class F1; a class absent from both sides scores 0."""
    tp, fp, fn = _counts(y_true, y_pred, num_classes)
    f1 = np.zeros(len(tp))
    denom = 2 * tp + fp + fn
    ok = denom > 0
    f1[ok] = 2.0 * tp[ok] / denom[ok]
    return float(f1.mean())


def micro_f1(y_true, y_pred, num_classes):
    """F1 of globally pooled counts (equals accuracy for single-label)."""
    tp, fp, fn = _counts(y_true, y_pred, num_classes)
    denom = 2 * tp.sum() + fp.sum() + fn.sum()
    if denom == 0:
        return 0.0
    return float(2.0 * tp.sum() / denom)


def binary_average_precision(y_true, scores):
    """AP as the standard sum over ranked positives: mean of P@k at each hit.

    Ties are broken by original index after a stable descending score sort.
    """
    y_true = np.asarray(y_true).astype(bool)
    scores = np.asarray(scores, dtype=np.float64)
    if y_true.size == 0:
        raise EmptySplitError("no rows to score")
    n_pos = int(y_true.sum())
    if n_pos == 0:
        return float("nan")
    order = np.argsort(-scores, kind="stable")
    hits = y_true[order]
    ranks = np.arange(1, len(hits) + 1)
    prec_at_hit = np.cumsum(hits)[hits] / ranks[hits]
    return float(prec_at_hit.sum() / n_pos)


def average_precision(y_true, scores, num_classes):
    """Per-class AP averaged over classes that have at least one positive.

    y_true: (n,) class indices or (n, C) binary matrix; scores: (n, C).
    """
    y_true = np.asarray(y_true)
    scores = np.asarray(scores, dtype=np.float64)
    if y_true.size == 0:
        raise EmptySplitError("no rows to score")
    if scores.ndim == 1:
        return binary_average_precision(y_true, scores)
    aps = []
    for c in range(num_classes):
        truth = y_true[:, c] if y_true.ndim == 2 else (y_true == c)
        if truth.sum() == 0:
            continue
        aps.append(binary_average_precision(truth, scores[:, c]))
    return float(np.mean(aps)) if aps else 0.0
