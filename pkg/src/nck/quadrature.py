"""Small fixed-node Gauss-Legendre helpers shared by the functional evaluators.

Everything here is deterministic: nodes and weights come from
``numpy.polynomial.legendre.leggauss`` and all reductions are plain numpy
sums (pairwise, single thread), so repeated runs are bit-identical.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=32)
def gauss_01(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1]; weights sum to 1."""
    x, w = np.polynomial.legendre.leggauss(order)
    return (x + 1.0) / 2.0, w / 2.0


def sqrt_nodes(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell nodes/weights for integrals of f(x)/sqrt(x) against cell averages.

    Substituting x = u^2 turns the 1/sqrt(x) factor into a smooth rule:
    int_a^b f(x) x^(-1/2) dx = 2 int_{sqrt a}^{sqrt b} f(u^2) du.
    Returned weights already include the factor 2 du, so
    sum_k w_k f(x_k) approximates int f(x) x^(-1/2) dx cellwise.
    Shapes: (n_cells, order).
    """
    t, wt = gauss_01(order)
    ua = np.sqrt(edges[:-1])[:, None]
    ub = np.sqrt(edges[1:])[:, None]
    u = ua + (ub - ua) * t[None, :]
    w = 2.0 * (ub - ua) * wt[None, :]
    return u * u, w


def plain_nodes(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell Gauss-Legendre nodes/weights for plain dx integrals; shapes (n_cells, order)."""
    t, wt = gauss_01(order)
    a = edges[:-1][:, None]
    b = edges[1:][:, None]
    return a + (b - a) * t[None, :], (b - a) * wt[None, :]


def segment_nodes(breaks: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """GL nodes/weights on each [breaks[i], breaks[i+1]] segment, flattened."""
    x, w = plain_nodes(np.asarray(breaks, dtype=float), order)
    return x.ravel(), w.ravel()
