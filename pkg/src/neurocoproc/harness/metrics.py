"""ROC analysis and plug-in mutual information for binary response vectors."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np


class MetricsError(ValueError):
    pass


class RocCurve(NamedTuple):
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def compute_roc(scores, labels) -> RocCurve:
    """ROC by sweeping a threshold down through the unique scores.

    Samples with equal scores enter together at one threshold, so ties add
    a diagonal segment. AUC is the trapezoidal area under the curve.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(int)
    if s.shape != y.shape or s.ndim != 1:
        raise MetricsError("scores and labels must be 1-D and the same length")
    if not np.all((y == 0) | (y == 1)):
        raise MetricsError("labels must be binary")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricsError("ROC needs both positive and negative labels")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    # last index of each run of equal scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[ends]
    fp = (ends + 1) - tp
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    thresholds = np.r_[np.inf, s[ends]]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(fpr, tpr, thresholds, auc)


def entropy_bits(a) -> float:
    a = np.asarray(a).astype(int)
    p = np.bincount(a, minlength=2) / a.size
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def mutual_information(a, b) -> float:
    """Plug-in mutual information (bits) from the empirical 2x2 joint table.
    No bias correction; ``0 log 0`` counts as zero."""
    a = np.asarray(a).astype(int)
    b = np.asarray(b).astype(int)
    if a.shape != b.shape or a.ndim != 1:
        raise MetricsError("response vectors must be 1-D and of equal length")
    if a.size == 0:
        raise MetricsError("response vectors must be non-empty")
    joint = np.zeros((2, 2))
    np.add.at(joint, (a, b), 1.0)
    return mi_from_counts(joint)


def mi_from_counts(joint) -> float:
    joint = np.asarray(joint, dtype=float)
    p = joint / joint.sum()
    pa = p.sum(axis=1, keepdims=True)
    pb = p.sum(axis=0, keepdims=True)
    nz = p > 0
    mi = float(np.sum(p[nz] * np.log2(p[nz] / (pa @ pb)[nz])))
    return max(mi, 0.0)
