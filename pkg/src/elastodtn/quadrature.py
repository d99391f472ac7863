"""Quadrature rules on reference simplices."""

from __future__ import annotations

import numpy as np

__all__ = ["tet_rule", "triangle_rule"]


def tet_rule():
    """Degree-2 rule on the reference tetrahedron.

    Returns
    -------
    bary : ndarray, shape (4, 4)
        Barycentric coordinates of the nodes.
    weights : ndarray, shape (4,)
        Weights summing to one (multiply by the cell volume).
    """
    a = (5.0 + 3.0 * np.sqrt(5.0)) / 20.0
    b = (5.0 - np.sqrt(5.0)) / 20.0
    bary = np.full((4, 4), b)
    np.fill_diagonal(bary, a)
    return bary, np.full(4, 0.25)


def triangle_rule(n: int):
    """Collapsed Gauss product rule with ``n * n`` nodes on the reference
    triangle ``{u, v >= 0, u + v <= 1}``.

    Exact for polynomials up to degree about ``2n - 2`` and spectrally
    accurate for smooth (e.g. oscillatory) integrands as ``n`` grows.

    Returns
    -------
    uv : ndarray, shape (n*n, 2)
    weights : ndarray, shape (n*n,)
        Weights summing to 1/2 (multiply by twice the triangle area).
    """
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    xi = np.repeat(x, n)
    eta = np.tile(x, n)
    u = xi
    v = eta * (1.0 - xi)
    wts = np.repeat(w, n) * np.tile(w, n) * (1.0 - xi)
    return np.column_stack([u, v]), wts
