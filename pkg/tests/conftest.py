from __future__ import annotations

import numpy as np
import pytest

from modelfree.formula import INTERCEPT, DesignMatrix


def make_design(x, y, intercept=True, names=None):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    names = tuple(names or [f"x{j + 1}" for j in range(x.shape[1])])
    if intercept:
        x = np.column_stack([np.ones(x.shape[0]), x])
        names = (INTERCEPT,) + names
    return DesignMatrix(np.asarray(y, dtype=float), x, names)


def hetero_design(n=500, seed=0):
    """y = 1 + 2x + |x| eps with x ~ N(0, 1): Var(eps | x) proportional to x^2."""
    g = np.random.default_rng(seed)
    x = g.normal(size=n)
    y = 1 + 2 * x + np.abs(x) * g.normal(size=n)
    return make_design(x, y)


def homo_design(n=2000, seed=0):
    g = np.random.default_rng(seed)
    x = g.normal(size=(n, 2))
    y = 0.5 + x @ np.array([1.0, -2.0]) + g.normal(size=n)
    return make_design(x, y)


def rel_frob(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b))


@pytest.fixture
def intercept_only():
    return DesignMatrix(np.array([1.0, 2.0, 3.0, 4.0]), np.ones((4, 1)), (INTERCEPT,))
