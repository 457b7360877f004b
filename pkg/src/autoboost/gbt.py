"""Gradient-boosted regression trees with second-order loss expansion.

Trees are grown by exact greedy split search over presorted feature values,
with the regularized gain of second-order boosting, learned default
directions for missing values, row subsampling, and column subsampling both
per tree and per depth level. Boosting-round count is chosen by early
stopping on a validation set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DataError, Dataset
from .metrics import Measure, logloss, mmce, rmse

_NEG_INF = -np.inf


@dataclass
class GBTConfig:
    """Training controls: the eight tuned hyperparameters plus fixed limits.

    ``gamma``, ``reg_lambda`` and ``reg_alpha`` are the post-transform values
    (the tuner works on a log2 scale and decodes before building configs).
    """

    eta: float = 0.1
    gamma: float = 0.0
    max_depth: int = 6
    colsample_bytree: float = 1.0
    colsample_bylevel: float = 1.0
    reg_lambda: float = 1.0
    reg_alpha: float = 0.0
    subsample: float = 1.0
    max_rounds: int = 1000
    patience: int = 10
    seed: int = 1

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.gamma < 0 or self.reg_lambda < 0 or self.reg_alpha < 0:
            raise ValueError("gamma, reg_lambda and reg_alpha must be >= 0")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        for name in ("colsample_bytree", "colsample_bylevel", "subsample"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ValueError(f"{name} must be in (0,1], got {v}")
        if self.max_rounds < 1:
            raise ValueError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")


@dataclass
class TreeNode:
    """Binary tree node; ``feature < 0`` marks a leaf carrying ``weight``."""

    feature: int = -1
    threshold: float = 0.0
    default_left: bool = True
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    weight: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass(frozen=True)
class BoostedModel:
    """Ordered list of trees plus a base score.

    ``rounds`` holds one tree per boosting round for regression and binary
    tasks and K trees (round-major, one per class) for multiclass. Prediction
    uses rounds up to ``best_iteration`` only.
    """

    task: str
    classes: tuple[str, ...] | None
    base_score: np.ndarray  # shape () for regression/binary, (K,) for multiclass
    rounds: tuple[tuple[TreeNode, ...], ...]
    best_iteration: int
    valid_history: tuple[float, ...]
    n_features: int
    feature_names: tuple[str, ...]


def loss_grad_hess(task: str, scores: np.ndarray, y: np.ndarray):
    """Per-row gradient and hessian of the training loss at raw scores.

    Squared error (1/2)(f-y)^2: g = f - y, h = 1. Binary logistic on margin
    f: p = sigmoid(f), g = p - y, h = p(1-p). Multiclass softmax on logits:
    g_c = p_c - [y = c], h_c = p_c (1 - p_c).
    """
    scores = np.asarray(scores, dtype=np.float64)
    if task == "regression":
        y = np.asarray(y, dtype=np.float64)
        return scores - y, np.ones_like(scores)
    if task == "binary":
        y = np.asarray(y, dtype=np.float64)
        p = _sigmoid(scores)
        return p - y, p * (1.0 - p)
    if task == "multiclass":
        p = _softmax(scores)
        g = p.copy()
        g[np.arange(len(p)), np.asarray(y, dtype=np.intp)] -= 1.0
        return g, p * (1.0 - p)
    raise ValueError(f"unknown task {task!r}")


def split_gain(g_left, h_left, g_right, h_right, reg_lambda: float, gamma: float):
    """Regularized gain of splitting a node into (left, right) halves.

    (1/2) [GL^2/(HL+lambda) + GR^2/(HR+lambda) - (GL+GR)^2/(HL+HR+lambda)] - gamma.
    Works elementwise on arrays; candidates with a zero denominator come out
    as -inf so they can never be selected.
    """
    g_left = np.asarray(g_left, dtype=np.float64)
    h_left = np.asarray(h_left, dtype=np.float64)
    g_right = np.asarray(g_right, dtype=np.float64)
    h_right = np.asarray(h_right, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = 0.5 * (
            g_left**2 / (h_left + reg_lambda)
            + g_right**2 / (h_right + reg_lambda)
            - (g_left + g_right) ** 2 / (h_left + h_right + reg_lambda)
        ) - gamma
    return np.where(np.isfinite(gain), gain, _NEG_INF) if gain.ndim else (
        float(gain) if np.isfinite(gain) else _NEG_INF
    )


def leaf_weight(g_sum: float, h_sum: float, reg_lambda: float, reg_alpha: float) -> float:
    """Optimal raw leaf weight -soft(G, alpha) / (H + lambda).

    soft() is the L1 soft-threshold sign(G) * max(|G| - alpha, 0). The
    learning rate is applied later, when the weight is accumulated.
    """
    denom = h_sum + reg_lambda
    if denom <= 0.0:
        return 0.0
    soft = np.sign(g_sum) * max(abs(g_sum) - reg_alpha, 0.0)
    return float(-soft / denom)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class _Split:
    gain: float
    feature: int
    threshold: float
    default_left: bool


def _best_split(X, g, h, rows, cols, reg_lambda, gamma) -> _Split | None:
    """Exact greedy search over (feature, threshold, default direction).

    Candidates are scanned feature-ascending, threshold-ascending, with the
    missing-default tried left before right; only a strictly larger gain
    replaces the running best, so ties resolve to the earliest candidate.
    """
    g_node = g[rows]
    h_node = h[rows]
    g_total = float(g_node.sum())
    h_total = float(h_node.sum())
    best: _Split | None = None
    for f in cols:
        x = X[rows, f]
        miss = np.isnan(x)
        n_miss = int(miss.sum())
        xm = x[~miss]
        if xm.size < 2:
            continue
        order = np.argsort(xm, kind="stable")
        xs = xm[order]
        if xs[0] == xs[-1]:
            continue
        gs = g_node[~miss][order]
        hs = h_node[~miss][order]
        g_miss = float(g_node[miss].sum()) if n_miss else 0.0
        h_miss = float(h_node[miss].sum()) if n_miss else 0.0

        g_left = np.cumsum(gs)[:-1]
        h_left = np.cumsum(hs)[:-1]
        boundary = xs[:-1] < xs[1:]
        if not boundary.any():
            continue
        thresholds = 0.5 * (xs[:-1] + xs[1:])

        # Try missing rows on the left, then on the right.
        gains_l = split_gain(
            g_left + g_miss, h_left + h_miss,
            g_total - g_left - g_miss, h_total - h_left - h_miss,
            reg_lambda, gamma,
        )
        gains_r = split_gain(
            g_left, h_left, g_total - g_left, h_total - h_left, reg_lambda, gamma
        )
        gains_l = np.where(boundary, gains_l, _NEG_INF)
        gains_r = np.where(boundary, gains_r, _NEG_INF)

        i_l = int(np.argmax(gains_l))
        i_r = int(np.argmax(gains_r))
        cand = _Split(float(gains_l[i_l]), int(f), float(thresholds[i_l]), True)
        gain_r = float(gains_r[i_r])
        if gain_r > cand.gain or (gain_r == cand.gain and thresholds[i_r] < cand.threshold):
            cand = _Split(gain_r, int(f), float(thresholds[i_r]), False)
        if best is None or cand.gain > best.gain:
            best = cand
    return best


def _sample_cols(cols: np.ndarray, frac: float, rng) -> np.ndarray:
    if frac >= 1.0 or len(cols) <= 1:
        return cols
    size = max(1, int(np.floor(frac * len(cols) + 0.5)))
    return np.sort(rng.choice(cols, size=size, replace=False))


def build_tree(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    *,
    max_depth: int,
    reg_lambda: float,
    reg_alpha: float,
    gamma: float,
    eta: float,
    cols: np.ndarray | None = None,
    colsample_bylevel: float = 1.0,
    rng=None,
) -> TreeNode:
    """Grow a single regression tree on gradients/hessians.

    Growth is depth-wise; every level draws its own column subset (shared by
    all nodes of that level). A branch stops at ``max_depth`` or when no
    candidate has gain > 0. Leaf weights carry the learning rate already.
    """
    if cols is None:
        cols = np.arange(X.shape[1])
    if rng is None:
        rng = np.random.default_rng(0)
    root = TreeNode()
    frontier: list[tuple[TreeNode, np.ndarray]] = [(root, np.arange(len(g)))]
    for _ in range(max_depth):
        if not frontier:
            break
        level_cols = _sample_cols(cols, colsample_bylevel, rng)
        next_frontier: list[tuple[TreeNode, np.ndarray]] = []
        for node, rows in frontier:
            split = _best_split(X, g, h, rows, level_cols, reg_lambda, gamma) if len(rows) >= 2 else None
            if split is None or not (split.gain > 0.0):
                _finish_leaf(node, g, h, rows, reg_lambda, reg_alpha, eta)
                continue
            node.feature = split.feature
            node.threshold = split.threshold
            node.default_left = split.default_left
            x = X[rows, split.feature]
            miss = np.isnan(x)
            go_left = x < split.threshold
            go_left[miss] = split.default_left
            node.left = TreeNode()
            node.right = TreeNode()
            next_frontier.append((node.left, rows[go_left]))
            next_frontier.append((node.right, rows[~go_left]))
        frontier = next_frontier
    for node, rows in frontier:
        _finish_leaf(node, g, h, rows, reg_lambda, reg_alpha, eta)
    return root


def _finish_leaf(node, g, h, rows, reg_lambda, reg_alpha, eta):
    node.feature = -1
    node.weight = eta * leaf_weight(float(g[rows].sum()), float(h[rows].sum()), reg_lambda, reg_alpha)


def _tree_outputs(node: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(len(X), dtype=np.float64)
    stack = [(node, np.arange(len(X)))]
    while stack:
        nd, idx = stack.pop()
        if nd.is_leaf:
            out[idx] = nd.weight
            continue
        x = X[idx, nd.feature]
        miss = np.isnan(x)
        go_left = x < nd.threshold
        go_left[miss] = nd.default_left
        stack.append((nd.left, idx[go_left]))
        stack.append((nd.right, idx[~go_left]))
    return out


def _base_score(task: str, y: np.ndarray, n_classes: int) -> np.ndarray:
    if task == "regression":
        return np.asarray(float(np.mean(y)))
    if task == "binary":
        p = float(np.clip(np.mean(y), 1e-12, 1.0 - 1e-12))
        return np.asarray(float(np.log(p / (1.0 - p))))
    freq = np.bincount(np.asarray(y, dtype=np.intp), minlength=n_classes) / len(y)
    return np.log(np.clip(freq, 1e-12, None))


def _monitor_value(measure: Measure, task: str, scores: np.ndarray, y: np.ndarray) -> float:
    """Validation value of the monitored measure at raw scores."""
    if task == "regression":
        return rmse(scores, y)
    probs = _scores_to_probs(task, scores)
    if measure.requires == "probabilities":
        return logloss(probs, y)
    return mmce(np.argmax(probs, axis=1), y)


def _scores_to_probs(task: str, scores: np.ndarray) -> np.ndarray:
    if task == "binary":
        p = _sigmoid(scores)
        return np.column_stack([1.0 - p, p])
    return _softmax(scores)


def train(train_ds: Dataset, valid_ds: Dataset, cfg: GBTConfig, measure: Measure) -> BoostedModel:
    """Boost with early stopping monitored on the validation split.

    A round trains one tree (K for multiclass) on a fresh seeded row
    subsample and tree-level column sample, updates train/valid raw scores,
    and records the validation measure. Training stops once the best
    validation value has not improved for ``patience`` consecutive rounds or
    at ``max_rounds``; ``best_iteration`` is the earliest argmin.
    """
    if train_ds.n_rows == 0:
        raise DataError("cannot train on an empty dataset")
    if valid_ds.n_rows == 0:
        raise DataError("validation split has zero rows")
    if train_ds.feature_schema != valid_ds.feature_schema:
        raise DataError("train and validation feature schemas differ")
    task = train_ds.task
    X = train_ds.feature_matrix()
    Xv = valid_ds.feature_matrix()
    n, d = X.shape
    if d == 0:
        raise DataError("dataset has no feature columns")

    if task == "regression":
        y = np.asarray(train_ds.target_values(), dtype=np.float64)
        yv = np.asarray(valid_ds.target_values(), dtype=np.float64)
        classes = None
        n_out = 1
    else:
        classes = train_ds.classes
        lookup = {c: i for i, c in enumerate(classes)}
        y = np.asarray([lookup[v] for v in train_ds.target_values()], dtype=np.intp)
        yv_raw = valid_ds.target_values()
        unknown = [v for v in yv_raw if v not in lookup]
        if unknown:
            raise DataError(f"validation label {unknown[0]!r} not present in training data")
        yv = np.asarray([lookup[v] for v in yv_raw], dtype=np.intp)
        n_out = len(classes) if task == "multiclass" else 1

    base = _base_score(task, y, n_out)
    if task == "multiclass":
        scores = np.tile(base, (n, 1))
        scores_v = np.tile(base, (Xv.shape[0], 1))
    else:
        scores = np.full(n, float(base))
        scores_v = np.full(Xv.shape[0], float(base))

    rng = np.random.default_rng(cfg.seed)
    all_cols = np.arange(d)
    rounds: list[tuple[TreeNode, ...]] = []
    history: list[float] = []
    best_value = np.inf
    stale = 0

    for _ in range(cfg.max_rounds):
        if cfg.subsample < 1.0:
            size = max(1, int(np.floor(cfg.subsample * n + 0.5)))
            rows = np.sort(rng.choice(n, size=size, replace=False))
        else:
            rows = np.arange(n)
        Xs = X[rows]

        if task == "multiclass":
            g_all, h_all = loss_grad_hess(task, scores[rows], y[rows])
            group = []
            for c in range(n_out):
                tree_cols = _sample_cols(all_cols, cfg.colsample_bytree, rng)
                tree = build_tree(
                    Xs, g_all[:, c], h_all[:, c],
                    max_depth=cfg.max_depth, reg_lambda=cfg.reg_lambda,
                    reg_alpha=cfg.reg_alpha, gamma=cfg.gamma, eta=cfg.eta,
                    cols=tree_cols, colsample_bylevel=cfg.colsample_bylevel, rng=rng,
                )
                group.append(tree)
                scores[:, c] += _tree_outputs(tree, X)
                scores_v[:, c] += _tree_outputs(tree, Xv)
            rounds.append(tuple(group))
        else:
            g, h = loss_grad_hess(task, scores[rows], y[rows])
            tree_cols = _sample_cols(all_cols, cfg.colsample_bytree, rng)
            tree = build_tree(
                Xs, g, h,
                max_depth=cfg.max_depth, reg_lambda=cfg.reg_lambda,
                reg_alpha=cfg.reg_alpha, gamma=cfg.gamma, eta=cfg.eta,
                cols=tree_cols, colsample_bylevel=cfg.colsample_bylevel, rng=rng,
            )
            rounds.append((tree,))
            scores += _tree_outputs(tree, X)
            scores_v += _tree_outputs(tree, Xv)

        value = _monitor_value(measure, task, scores_v, yv)
        history.append(value)
        if value < best_value:
            best_value = value
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    best_iteration = int(np.argmin(history)) + 1
    return BoostedModel(
        task=task,
        classes=classes,
        base_score=base,
        rounds=tuple(rounds),
        best_iteration=best_iteration,
        valid_history=tuple(history),
        n_features=d,
        feature_names=tuple(c.name for c in train_ds.feature_columns),
    )


def predict(model: BoostedModel, X: np.ndarray, upto: int | None = None) -> np.ndarray:
    """Predict raw regression values or row-stochastic class probabilities.

    Sums tree outputs through min(upto, best_iteration) rounds, default
    best_iteration. Missing features follow each node's stored default
    direction.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DataError(
            f"feature count mismatch: model expects {model.n_features}, got "
            f"{X.shape[1] if X.ndim == 2 else 'non-matrix input'}"
        )
    n_rounds = model.best_iteration if upto is None else max(0, min(upto, model.best_iteration))
    if model.task == "multiclass":
        scores = np.tile(model.base_score, (len(X), 1))
        for group in model.rounds[:n_rounds]:
            for c, tree in enumerate(group):
                scores[:, c] += _tree_outputs(tree, X)
        return _softmax(scores)
    scores = np.full(len(X), float(model.base_score))
    for group in model.rounds[:n_rounds]:
        scores += _tree_outputs(group[0], X)
    if model.task == "binary":
        p = _sigmoid(scores)
        return np.column_stack([1.0 - p, p])
    return scores
