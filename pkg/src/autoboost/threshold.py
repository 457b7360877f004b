"""Metric-aware optimization of classification decision thresholds.

Binary tasks search a cutoff on the positive-class probability with a
multi-start linesearch; multiclass tasks anneal per-class divisors on the
open simplex with a heavy-tailed (generalized simulated annealing) visiting
distribution. Both optimizers always evaluate the default thresholds, so
they can never return something worse than plain argmax / 0.5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_POSITIVE_FLOOR = 1e-6


@dataclass(frozen=True)
class ThresholdVector:
    """Length-1 cutoff for binary tasks, K positive divisors for multiclass.

    Multiclass vectors are normalized to sum 1 at construction; the decision
    rule argmax_k p_k / t_k is invariant to that scaling anyway.
    """

    t: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64).ravel()
        if t.size == 0:
            raise ValueError("threshold vector must not be empty")
        if t.size == 1:
            if not (0.0 < t[0] < 1.0):
                raise ValueError(f"binary threshold must lie in (0,1), got {t[0]}")
        else:
            if np.any(t <= 0.0):
                raise ValueError("multiclass thresholds must all be positive")
            # Keep already-normalized vectors bit-identical so a value computed
            # with them can be reproduced exactly from the stored vector.
            if abs(t.sum() - 1.0) > 1e-12:
                t = t / t.sum()
        object.__setattr__(self, "t", t)

    def __len__(self) -> int:
        return len(self.t)


def apply_thresholds(prob: np.ndarray, t) -> np.ndarray:
    """Turn row-stochastic probabilities into class indices.

    Binary: predict class 1 iff p >= t. Multiclass: argmax of p_k / t_k,
    ties resolving to the lowest class index. ``t`` may be a ThresholdVector
    or a raw positive array (useful for checking scale invariance before
    normalization).
    """
    prob = np.asarray(prob, dtype=np.float64)
    if prob.ndim != 2:
        raise ValueError("prob must be an (n, K) matrix")
    tv = t.t if isinstance(t, ThresholdVector) else np.asarray(t, dtype=np.float64).ravel()
    k = prob.shape[1]
    if len(tv) == 1:
        if k != 2:
            raise ValueError(f"scalar threshold needs 2 probability columns, got {k}")
        return (prob[:, 1] >= tv[0]).astype(np.intp)
    if len(tv) != k:
        raise ValueError(f"threshold length {len(tv)} does not match {k} classes")
    return np.argmax(prob / tv, axis=1).astype(np.intp)


def optimize_binary(
    prob: np.ndarray,
    truth: np.ndarray,
    measure_fn,
    n_starts: int = 5,
    n_steps: int = 100,
) -> tuple[ThresholdVector, float]:
    """Multi-start linesearch for the binary cutoff.

    The (0,1) interval is covered by a grid of ``n_steps`` points split into
    ``n_starts`` equal windows; each window's best point is refined once at
    10x resolution. The default cutoff 0.5 is always evaluated, so the
    returned value never exceeds the measure at 0.5. Ties go to the smallest
    cutoff.
    """
    prob = np.asarray(prob, dtype=np.float64).ravel()
    truth = np.asarray(truth)
    if prob.ndim != 1 or len(prob) != len(truth) or len(prob) == 0:
        raise ValueError("need matching non-empty probability and truth vectors")
    if n_starts < 1 or n_steps < 1:
        raise ValueError("n_starts and n_steps must be >= 1")
    distinct = set(np.unique(truth).tolist())
    if not distinct <= {0, 1}:
        raise ValueError(f"binary truth must be 0/1 class indices, got {sorted(distinct)}")

    spacing = 1.0 / (n_steps + 1)
    grid = spacing * np.arange(1, n_steps + 1)
    values = np.asarray([measure_fn((prob >= t).astype(np.intp), truth) for t in grid])

    candidates = [(0.5, float(measure_fn((prob >= 0.5).astype(np.intp), truth)))]
    window = max(1, n_steps // n_starts)
    for s in range(n_starts):
        lo = s * window
        hi = n_steps if s == n_starts - 1 else (s + 1) * window
        if lo >= hi:
            continue
        local = lo + int(np.argmin(values[lo:hi]))
        candidates.append((float(grid[local]), float(values[local])))
        fine = grid[local] + (spacing / 10.0) * np.arange(-9, 10)
        for t in fine:
            if 0.0 < t < 1.0:
                candidates.append((float(t), float(measure_fn((prob >= t).astype(np.intp), truth))))

    candidates.sort(key=lambda c: (c[1], c[0]))
    best_t, best_v = candidates[0]
    return ThresholdVector(np.asarray([best_t])), best_v


def _visiting_temperature(i: int, temp0: float, q_v: float) -> float:
    return temp0 * (2.0 ** (q_v - 1.0) - 1.0) / ((1.0 + i) ** (q_v - 1.0) - 1.0)


def _tsallis_step(rng, size: int, q_v: float) -> np.ndarray:
    """Heavy-tailed visiting sample via the Student-t representation.

    A q-Gaussian with shape q equals a Student-t with nu = (3-q)/(q-1)
    degrees of freedom, which for the customary q_v = 2.62 gives the very
    heavy tails that let the annealer make occasional long jumps.
    """
    nu = (3.0 - q_v) / (q_v - 1.0)
    normal = rng.standard_normal(size)
    chi2 = rng.chisquare(nu, size)
    return normal * np.sqrt(nu / np.maximum(chi2, 1e-300))


def optimize_multiclass_gsa(
    prob: np.ndarray,
    truth: np.ndarray,
    measure_fn,
    iters: int = 500,
    seed: int = 1,
    q_v: float = 2.62,
    temp0: float = 1.0,
) -> tuple[ThresholdVector, float]:
    """Generalized simulated annealing over per-class threshold divisors.

    State is a point on the open simplex, started at uniform (which equals
    plain argmax and is evaluated first, so the result is never worse).
    Iteration i perturbs every coordinate with a heavy-tailed visiting step
    scaled by T_v(i) = temp0 (2^(q_v-1)-1)/((1+i)^(q_v-1)-1), clamps the
    proposal back onto the open simplex, and accepts worse states with
    probability exp(-delta / T_a) where T_a = T_v(i)/(i+1). Best-ever state
    and value are returned; the run is deterministic per seed.
    """
    prob = np.asarray(prob, dtype=np.float64)
    if prob.ndim != 2 or prob.shape[1] < 3:
        raise ValueError("multiclass threshold optimization needs an (n, K>=3) matrix")
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    truth = np.asarray(truth)
    k = prob.shape[1]
    rng = np.random.default_rng(int(seed) & 0x7FFFFFFFFFFFFFFF)

    def evaluate(state: np.ndarray) -> float:
        return float(measure_fn(np.argmax(prob / state, axis=1).astype(np.intp), truth))

    current = np.full(k, 1.0 / k)
    current = current / current.sum()
    current_value = evaluate(current)
    best_state, best_value = current.copy(), current_value

    for i in range(1, iters + 1):
        t_visit = _visiting_temperature(i, temp0, q_v)
        proposal = current + t_visit * _tsallis_step(rng, k, q_v)
        proposal = np.maximum(proposal, _POSITIVE_FLOOR)
        proposal = proposal / proposal.sum()
        value = evaluate(proposal)
        if value < best_value:
            best_state, best_value = proposal.copy(), value
        accept = value <= current_value
        if not accept:
            t_accept = t_visit / (i + 1.0)
            accept = rng.uniform() < math.exp(-(value - current_value) / max(t_accept, 1e-300))
        if accept:
            current, current_value = proposal, value

    return ThresholdVector(best_state), best_value
