"""Low-level convex geometry shared by the polytope and stability modules.

Vertex enumeration is exact (``fractions.Fraction``); everything downstream
of the vertex list (triangulation, quadrature) is floating point.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.spatial import Delaunay
from scipy.special import roots_jacobi


def as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(value).limit_denominator(10**12)
    return Fraction(value)


def solve_exact(rows: Sequence[Sequence[Fraction]], rhs: Sequence[Fraction]):
    """Gauss-Jordan elimination over the rationals; None if singular."""
    n = len(rows)
    m = [list(r) + [b] for r, b in zip(rows, rhs)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if m[r][col] != 0), None)
        if pivot is None:
            return None
        m[col], m[pivot] = m[pivot], m[col]
        inv = 1 / m[col][col]
        m[col] = [v * inv for v in m[col]]
        for r in range(n):
            if r != col and m[r][col] != 0:
                f = m[r][col]
                m[r] = [a - f * b for a, b in zip(m[r], m[col])]
    return [m[r][n] for r in range(n)]


def exact_det(rows: Sequence[Sequence[Fraction]]) -> Fraction:
    n = len(rows)
    m = [list(map(Fraction, r)) for r in rows]
    det = Fraction(1)
    for col in range(n):
        pivot = next((r for r in range(col, n) if m[r][col] != 0), None)
        if pivot is None:
            return Fraction(0)
        if pivot != col:
            m[col], m[pivot] = m[pivot], m[col]
            det = -det
        det *= m[col][col]
        for r in range(col + 1, n):
            f = m[r][col] / m[col][col]
            if f:
                m[r] = [a - f * b for a, b in zip(m[r], m[col])]
    return det


def enumerate_vertices(normals, offsets, equalities=()):
    """Vertices of {x : <l_k, x> + c_k >= 0} intersected with equality rows.

    ``equalities`` is a sequence of (normal, offset) pairs forced to zero.
    Brute force over n-subsets; intended for the small polytopes used here.
    """
    normals = [tuple(as_fraction(v) for v in l) for l in normals]
    offsets = [as_fraction(c) for c in offsets]
    eq = [(tuple(as_fraction(v) for v in l), as_fraction(c)) for l, c in equalities]
    n = len(normals[0]) if normals else len(eq[0][0])
    need = n - len(eq)
    found = []
    seen = set()
    for combo in itertools.combinations(range(len(normals)), need):
        rows = [normals[i] for i in combo] + [l for l, _ in eq]
        rhs = [-offsets[i] for i in combo] + [-c for _, c in eq]
        x = solve_exact(rows, rhs)
        if x is None:
            continue
        if all(sum(a * b for a, b in zip(l, x)) + c >= 0 for l, c in zip(normals, offsets)):
            key = tuple(x)
            if key not in seen:
                seen.add(key)
                found.append(key)
    return found


def affine_frame(points: np.ndarray, tol: float = 1e-12):
    """Origin and orthonormal basis (rows) of the affine hull of ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    origin = points[0]
    diffs = points[1:] - origin
    if diffs.shape[0] == 0:
        return origin, np.zeros((0, points.shape[1]))
    _, s, vt = np.linalg.svd(diffs, full_matrices=False)
    scale = max(1.0, float(np.abs(diffs).max()))
    rank = int(np.sum(s > tol * scale))
    return origin, vt[:rank]


def affine_dim(points) -> int:
    return affine_frame(points)[1].shape[0]


def hull_simplices(points) -> list[np.ndarray]:
    """Triangulate the convex hull of ``points`` inside its affine hull.

    Returns a list of (d+1, n) vertex arrays, d the affine dimension.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    origin, basis = affine_frame(pts)
    d = basis.shape[0]
    if d == 0:
        return [pts[:1].copy()]
    local = (pts - origin) @ basis.T
    if d == 1:
        lo, hi = int(np.argmin(local[:, 0])), int(np.argmax(local[:, 0]))
        return [np.stack([pts[lo], pts[hi]])]
    tri = Delaunay(local)
    return [pts[s] for s in tri.simplices]


def simplex_measure(simplex: np.ndarray) -> float:
    """d-dimensional measure of a d-simplex embedded in R^n."""
    d = simplex.shape[0] - 1
    if d == 0:
        return 1.0
    e = simplex[1:] - simplex[0]
    gram = e @ e.T
    return math.sqrt(max(np.linalg.det(gram), 0.0)) / math.factorial(d)


@lru_cache(maxsize=None)
def _reference_rule(d: int, order: int):
    """Collapsed Gauss-Jacobi rule on the unit d-simplex (weights sum to 1/d!).

    Exact for polynomials of total degree <= order; all weights positive.
    """
    if d == 0:
        return np.zeros((1, 0)), np.ones(1)
    q = max(1, (order + 2) // 2)
    one_d = []
    for i in range(d):
        alpha = d - 1 - i
        x, w = roots_jacobi(q, alpha, 0)
        s = (x + 1) / 2
        w = w / 2 ** (alpha + 1)
        one_d.append((s, w))
    grids = np.meshgrid(*[s for s, _ in one_d], indexing="ij")
    wgrids = np.meshgrid(*[w for _, w in one_d], indexing="ij")
    s = np.stack([g.ravel() for g in grids], axis=1)
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    # conical map: t_1 = s_1, t_2 = (1 - s_1) s_2, ...
    t = np.empty_like(s)
    rem = np.ones(s.shape[0])
    for i in range(d):
        t[:, i] = rem * s[:, i]
        rem = rem * (1 - s[:, i])
    return t, w


def simplex_rule(simplex: np.ndarray, order: int):
    """Nodes and weights on an embedded simplex, weights summing to its measure."""
    d = simplex.shape[0] - 1
    t, w = _reference_rule(d, order)
    if d == 0:
        return simplex[:1].copy(), np.ones(1)
    e = simplex[1:] - simplex[0]
    nodes = simplex[0] + t @ e
    return nodes, w * simplex_measure(simplex) * math.factorial(d)


def integrate_hull(points, func, order: int = 4) -> float:
    """Integral of ``func`` (vectorised over rows) over the convex hull of points."""
    total = 0.0
    for simplex in hull_simplices(points):
        nodes, weights = simplex_rule(simplex, order)
        total += float(np.dot(weights, func(nodes)))
    return total


def hull_volume_centroid(points):
    vol = 0.0
    moment = 0.0
    for simplex in hull_simplices(points):
        m = simplex_measure(simplex)
        vol += m
        moment = moment + m * simplex.mean(axis=0)
    return vol, (moment / vol if vol > 0 else np.asarray(points, float).mean(axis=0))
