"""Small quadrature helpers shared by the kernel and assembly modules."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def graded_panels(a: float, b: float, left: int = 0, right: int = 0,
                  uniform: int = 1) -> np.ndarray:
    """Panel endpoints on [a, b]: `uniform` equal panels, the first and last
    ones refined dyadically `left` / `right` times toward the end point."""
    edges = list(np.linspace(a, b, uniform + 1))
    if left > 0 and len(edges) >= 2:
        a0, a1 = edges[0], edges[1]
        extra = [a0 + (a1 - a0) * 0.5 ** k for k in range(left, 0, -1)]
        edges = [a0] + extra + edges[1:]
    if right > 0 and len(edges) >= 2:
        b0, b1 = edges[-2], edges[-1]
        extra = [b1 - (b1 - b0) * 0.5 ** k for k in range(1, right + 1)]
        edges = edges[:-1] + extra + [b1]
    return np.asarray(edges)


def composite_rule(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss rule of the given order on every panel delimited by `edges`."""
    x, w = gauss_legendre(order)
    edges = np.asarray(edges, dtype=float)
    lo = edges[:-1, None]
    ln = np.diff(edges)[:, None]
    nodes = lo + ln * x[None, :]
    weights = ln * w[None, :]
    return nodes.ravel(), weights.ravel()


def tensor_rule(order: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss rule on the unit cube [0, 1]^dim."""
    x, w = gauss_legendre(order)
    if dim == 1:
        return x[:, None].copy(), w.copy()
    X, Y = np.meshgrid(x, x, indexing="ij")
    WX, WY = np.meshgrid(w, w, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()]), (WX * WY).ravel()
