"""Rank metrics for OOD separability checks."""

import numpy as np

__all__ = ["auroc"]


def auroc(positive_scores, negative_scores) -> float:
    """Area under the ROC curve by explicit threshold sweep.

    ``positive_scores`` should score high (the detection target).  Tied
    scores contribute half credit through the trapezoidal segments.
    """
    pos = np.asarray(positive_scores, dtype=np.float64)
    neg = np.asarray(negative_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("both score sets must be nonempty")
    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    tpr = [0.0]
    fpr = [0.0]
    for t in thresholds:
        tpr.append((pos >= t).mean())
        fpr.append((neg >= t).mean())
    tpr.append(1.0)
    fpr.append(1.0)
    return float(np.trapezoid(tpr, fpr))
