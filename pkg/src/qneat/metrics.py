"""Binary classification metrics with "attack" (label 1) as the positive class."""

from __future__ import annotations

import numpy as np


def confusion(y_true, y_pred) -> tuple[int, int, int, int]:
    """Return ``(tp, fp, fn, tn)``."""
    t = np.asarray(y_true).astype(bool)
    p = np.asarray(y_pred).astype(bool)
    if t.shape != p.shape:
        raise ValueError("label arrays must have equal length")
    return int(np.sum(t & p)), int(np.sum(~t & p)), int(np.sum(t & ~p)), int(np.sum(~t & ~p))


def accuracy(y_true, y_pred) -> float:
    t, p = np.asarray(y_true), np.asarray(y_pred)
    if t.shape != p.shape:
        raise ValueError("label arrays must have equal length")
    return float(np.mean(t == p)) if t.size else 0.0


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    # precision or recall undefined -> 0
    if tp + fp == 0 or tp + fn == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def f1(y_true, y_pred) -> float:
    tp, fp, fn, _ = confusion(y_true, y_pred)
    return f1_from_counts(tp, fp, fn)


METRICS = {"accuracy": accuracy, "f1": f1}
