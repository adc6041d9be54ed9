"""Gauss-Hermite rules under a normal measure."""
from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=32)
def _standard_rule(n: int):
    x, w = np.polynomial.hermite.hermgauss(n)
    z = np.sqrt(2.0) * x
    p = w / np.sqrt(np.pi)
    z.setflags(write=False)
    p.setflags(write=False)
    return z, p


def normal_rule(n: int, mean: float = 0.0, sd: float = 1.0):
    """Nodes and probability weights for E[f(X)], X ~ N(mean, sd^2).

    With ``sd == 0`` the rule collapses to a single node at ``mean``.
    """
    if n < 1:
        raise ValueError("need at least one quadrature node")
    if sd == 0:
        return np.array([float(mean)]), np.array([1.0])
    z, p = _standard_rule(int(n))
    return mean + sd * z, p.copy()


def standard_nodes(n: int):
    """Standardized nodes z_i and weights p_i of the N(0, 1) rule."""
    z, p = _standard_rule(int(n))
    return z.copy(), p.copy()


def expect_normal(fn, mean: float, sd: float, n: int = 64) -> float:
    """E[fn(X)] for X ~ N(mean, sd^2); ``fn`` must accept an array of nodes."""
    x, p = normal_rule(n, mean, sd)
    return float(np.dot(p, fn(x)))
