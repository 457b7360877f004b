"""Shared synthetic dataset builders."""

import numpy as np
import pytest

from autoboost.data import Column, Dataset


def binary_margin_dataset(n, seed, missing=0.0, margin=0.2):
    """Separable 2-class task: label decided by x1 with a margin around 0.

    x1 is never missing, so the Bayes error stays 0 even when other cells
    are blanked out.
    """
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(-1.0, 1.0, size=n)
    shift = np.where(x1 >= 0, margin / 2, -margin / 2)
    x1 = np.where(np.abs(x1) < margin / 2, x1 + shift, x1)
    y = np.where(x1 > 0, "yes", "no")
    x2 = rng.normal(size=n)
    c1 = rng.choice(["a", "b", "c", "d"], size=n).astype(object)
    c2 = rng.choice(["u", "v"], size=n).astype(object)
    if missing > 0:
        x2[rng.uniform(size=n) < missing] = np.nan
        c1[rng.uniform(size=n) < missing] = "__NA__"
        c2[rng.uniform(size=n) < missing] = "__NA__"
    return Dataset(
        (
            Column("x1", "numeric", x1),
            Column("x2", "numeric", x2),
            Column("c1", "categorical", c1),
            Column("c2", "categorical", c2),
            Column("label", "categorical", y),
        ),
        "label",
        "binary",
    )


def numeric_binary_dataset(n, seed, missing=0.1, margin=0.2):
    """All-numeric variant of the margin task, suitable for raw GBT training."""
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(-1.0, 1.0, size=n)
    shift = np.where(x1 >= 0, margin / 2, -margin / 2)
    x1 = np.where(np.abs(x1) < margin / 2, x1 + shift, x1)
    y = np.where(x1 > 0, "yes", "no")
    x2 = rng.normal(size=n)
    if missing > 0:
        x2[rng.uniform(size=n) < missing] = np.nan
    return Dataset(
        (
            Column("x1", "numeric", x1),
            Column("x2", "numeric", x2),
            Column("label", "categorical", y),
        ),
        "label",
        "binary",
    )


def linear_regression_dataset(n, seed):
    """Noiseless y = x1 with one decorative extra feature."""
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(-2.0, 2.0, size=n)
    x2 = rng.normal(size=n)
    return Dataset(
        (
            Column("x1", "numeric", x1),
            Column("x2", "numeric", x2),
            Column("y", "numeric", x1.copy()),
        ),
        "y",
        "regression",
    )


def random_mixed_dataset(seed, n=None, n_levels=None):
    """Small random dataset with one categorical and one numeric feature."""
    rng = np.random.default_rng(seed)
    n = n if n is not None else int(rng.integers(8, 51))
    n_levels = n_levels if n_levels is not None else int(rng.integers(2, 9))
    levels = [f"lv{i}" for i in range(n_levels)]
    cat = rng.choice(levels, size=n).astype(object)
    num = rng.normal(size=n)
    if rng.uniform() < 0.5:
        y = rng.normal(size=n)
        target = Column("y", "numeric", y)
        task = "regression"
    else:
        y = rng.choice(["c0", "c1", "c2"], size=n).astype(object)
        while len(set(y.tolist())) < 3:
            y = rng.choice(["c0", "c1", "c2"], size=n).astype(object)
        target = Column("y", "categorical", y)
        task = "multiclass"
    return Dataset(
        (Column("cat", "categorical", cat), Column("num", "numeric", num), target),
        "y",
        task,
    )


@pytest.fixture
def small_binary():
    return binary_margin_dataset(120, seed=3)
