"""Performance measures used as tuning objectives and for threshold search.

All measures are minimized. A measure that would naturally be maximized must
be negated before registration; keeping a single direction simplifies both
the optimizer loop and the threshold code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_CLIP = 1e-15
ROW_SUM_TOL = 1e-8


@dataclass(frozen=True)
class Measure:
    name: str
    direction: str  # always "minimize"
    requires: str   # "labels" | "probabilities" | "numeric"


MEASURES = {
    "mmce": Measure("mmce", "minimize", "labels"),
    "logloss": Measure("logloss", "minimize", "probabilities"),
    "rmse": Measure("rmse", "minimize", "numeric"),
}


def get_measure(name: str) -> Measure:
    try:
        return MEASURES[name]
    except KeyError:
        raise ValueError(f"unknown measure {name!r}, expected one of {sorted(MEASURES)}") from None


def default_measure(task: str) -> Measure:
    """mmce for classification, rmse for regression."""
    return MEASURES["rmse"] if task == "regression" else MEASURES["mmce"]


def mmce(predicted, truth) -> float:
    """Mean misclassification error: fraction of positions where labels differ."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape or predicted.ndim != 1:
        raise ValueError(f"label vectors must match, got {predicted.shape} vs {truth.shape}")
    if predicted.size == 0:
        raise ValueError("mmce of empty vectors is undefined")
    return float(np.mean(predicted != truth))


def logloss(prob, truth, labels=None) -> float:
    """Mean negative log probability of the true class.

    ``prob`` is an (n, K) row-stochastic matrix. ``truth`` holds integer
    column indices, or labels resolved through ``labels``. Probabilities are
    clipped to [1e-15, 1 - 1e-15] before the log.
    """
    prob = np.asarray(prob, dtype=np.float64)
    if prob.ndim != 2 or prob.shape[0] == 0:
        raise ValueError("prob must be a non-empty (n, K) matrix")
    row_sums = prob.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > ROW_SUM_TOL):
        raise ValueError("probability rows must sum to 1 within 1e-8")
    n, k = prob.shape
    if labels is not None:
        lookup = {label: i for i, label in enumerate(labels)}
        try:
            idx = np.asarray([lookup[t] for t in truth], dtype=np.intp)
        except KeyError as exc:
            raise ValueError(f"unknown label {exc.args[0]!r}") from None
    else:
        idx = np.asarray(truth, dtype=np.intp)
        if np.any(idx < 0) or np.any(idx >= k):
            raise ValueError("truth indices out of range for probability columns")
    if len(idx) != n:
        raise ValueError(f"need {n} truth entries, got {len(idx)}")
    p_true = np.clip(prob[np.arange(n), idx], PROB_CLIP, 1.0 - PROB_CLIP)
    return float(-np.mean(np.log(p_true)))


def rmse(predicted, truth) -> float:
    """Root mean squared error."""
    predicted = np.asarray(predicted, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if predicted.shape != truth.shape or predicted.ndim != 1:
        raise ValueError(f"value vectors must match, got {predicted.shape} vs {truth.shape}")
    if predicted.size == 0:
        raise ValueError("rmse of empty vectors is undefined")
    return float(np.sqrt(np.mean((predicted - truth) ** 2)))
