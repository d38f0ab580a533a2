"""Quadrature rules on the reference tetrahedron, triangle and interval.

Reference tetrahedron: vertices 0, e1, e2, e3 (volume 1/6).
Reference triangle: vertices 0, e1, e2 (area 1/2).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (Q, dim) reference coordinates
    weights: np.ndarray  # (Q,) summing to the reference measure
    degree: int

    @property
    def barycentric(self) -> np.ndarray:
        """(Q, dim + 1) barycentric coordinates, lambda_0 = 1 - sum(points)."""
        return np.column_stack([1.0 - self.points.sum(axis=1), self.points])

    def __len__(self) -> int:
        return len(self.weights)


def _orbit_4(a: float) -> list[tuple[float, float, float]]:
    b = 1.0 - 3.0 * a
    return [(b, a, a), (a, b, a), (a, a, b), (a, a, a)]


def _orbit_6(a: float) -> list[tuple[float, float, float]]:
    b = 0.5 - a
    return [(a, a, b), (a, b, a), (b, a, a), (a, b, b), (b, a, b), (b, b, a)]


def _orbit_12(a: float, b: float) -> list[tuple[float, float, float]]:
    c = 1.0 - 2.0 * a - b
    pts = set()
    for p in ((a, a, b), (a, a, c), (a, b, c), (b, c, a)):
        for perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
            pts.add(tuple(p[i] for i in perm))
    # keep only points whose barycentric completion is the (a, a, b, c) class
    out = []
    for p in sorted(pts):
        lam = sorted((1.0 - sum(p),) + p)
        if np.allclose(lam, sorted((a, a, b, c))):
            out.append(p)
    return out


def _keast(orbits) -> tuple[np.ndarray, np.ndarray]:
    pts, wts = [], []
    for points, weight in orbits:
        pts.extend(points)
        wts.extend([weight / 6.0] * len(points))
    return np.array(pts), np.array(wts)


def _stroud_tet(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed-coordinate Gauss-Jacobi product rule, exact to degree 2k - 1."""
    nodes, weights = [], []
    for alpha in (2, 1, 0):
        s, w = roots_jacobi(k, alpha, 0)
        nodes.append((1.0 + s) / 2.0)
        weights.append(w / 2.0 ** (alpha + 1))
    a, b, c = np.meshgrid(*nodes, indexing="ij")
    wa, wb, wc = np.meshgrid(*weights, indexing="ij")
    x = a
    y = b * (1.0 - a)
    z = c * (1.0 - a) * (1.0 - b)
    pts = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    return pts, (wa * wb * wc).ravel()


@lru_cache(maxsize=None)
def tet_rule(degree: int) -> QuadratureRule:
    """Rule on the reference tetrahedron exact for polynomials of total ``degree``."""
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    if degree <= 1:
        pts, w = np.array([[0.25, 0.25, 0.25]]), np.array([1.0 / 6.0])
    elif degree == 2:
        a = (5.0 - np.sqrt(5.0)) / 20.0
        pts = np.array(_orbit_4(a))
        w = np.full(4, 1.0 / 24.0)
    elif degree <= 4:
        # Keast 14-point rule
        pts, w = _keast([
            (_orbit_6(0.0), 0.0190476190476190),
            (_orbit_4(0.1005267652252045), 0.0885898247429807),
            (_orbit_4(0.3143728734931922), 0.1328387466855907),
        ])
    elif degree == 5:
        # Keast 15-point rule
        pts, w = _keast([
            ([(0.25, 0.25, 0.25)], 0.1817020685825351),
            (_orbit_4(1.0 / 3.0), 0.0361607142857143),
            (_orbit_4(0.0909090909090909), 0.0698714945161738),
            (_orbit_6(0.0665501535736643), 0.0656948493683187),
        ])
    elif degree == 6:
        # Keast 24-point rule
        pts, w = _keast([
            (_orbit_4(0.2146028712591517), 0.0399227502581679),
            (_orbit_4(0.0406739585346113), 0.0100772110553207),
            (_orbit_4(0.3223378901422757), 0.0553571815436544),
            (_orbit_12(0.0636610018750175, 0.2696723314583159), 0.0482142857142857),
        ])
    else:
        pts, w = _stroud_tet((degree + 2) // 2)
    return QuadratureRule(points=pts, weights=w, degree=degree)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Collapsed Gauss-Jacobi rule on the reference triangle."""
    k = max(1, (degree + 2) // 2)
    s1, w1 = roots_jacobi(k, 1, 0)
    s2, w2 = roots_jacobi(k, 0, 0)
    a, b = np.meshgrid((1.0 + s1) / 2.0, (1.0 + s2) / 2.0, indexing="ij")
    wa, wb = np.meshgrid(w1 / 4.0, w2 / 2.0, indexing="ij")
    pts = np.column_stack([a.ravel(), (b * (1.0 - a)).ravel()])
    return QuadratureRule(points=pts, weights=(wa * wb).ravel(), degree=degree)


@lru_cache(maxsize=None)
def interval_rule(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1]."""
    k = max(1, (degree + 2) // 2)
    s, w = np.polynomial.legendre.leggauss(k)
    return QuadratureRule(points=((1.0 + s) / 2.0)[:, None], weights=w / 2.0, degree=degree)
