"""Delzant polytopes given by integer half-spaces.

A polytope is ``P = {x : delta_k(x) = <l_k, x> + c_k >= 0}`` with primitive
integer normals ``l_k``.  Vertices are enumerated in exact rational
arithmetic; quadrature is floating point on a barycentric fan.

The boundary measure ``sigma`` on the facet ``{delta_k = 0}`` is the
Euclidean (n-1)-measure divided by ``|l_k|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog

from . import _geometry as geo
from .errors import (
    EmptyInterior,
    NonLatticePolytope,
    NonPrimitiveNormal,
    NotDelzant,
    Unbounded,
    ValidationError,
)

DEFAULT_ORDER = 12


@dataclass(frozen=True)
class HalfSpace:
    """The half-space ``<normal, x> + offset >= 0``."""

    normal: tuple
    offset: Fraction

    def __post_init__(self):
        normal = tuple(int(v) for v in self.normal)
        if any(int(v) != v for v in self.normal):
            raise NonPrimitiveNormal(f"normal {self.normal} is not an integer vector")
        if not any(normal):
            raise NonPrimitiveNormal("normal vector is zero")
        if math.gcd(*(abs(v) for v in normal)) != 1:
            raise NonPrimitiveNormal(f"normal {normal} is not primitive")
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", geo.as_fraction(self.offset))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x @ np.asarray(self.normal, dtype=float) + float(self.offset)

    def exact(self, point) -> Fraction:
        return sum(Fraction(a) * b for a, b in zip(self.normal, point)) + self.offset


@dataclass(frozen=True)
class Polytope:
    """Validated Delzant polytope; build with :func:`build_polytope`."""

    dimension: int
    facets: tuple
    vertices: tuple
    facet_vertices: tuple = field(repr=False)

    @cached_property
    def normals(self) -> np.ndarray:
        return np.array([h.normal for h in self.facets], dtype=float)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.array([float(h.offset) for h in self.facets])

    @cached_property
    def vertex_array(self) -> np.ndarray:
        return np.array([[float(c) for c in v] for v in self.vertices])

    def delta(self, x) -> np.ndarray:
        """Facet functions at ``x`` (shape ``(..., n)``), returned as ``(..., K)``."""
        x = np.asarray(x, dtype=float)
        return x @ self.normals.T + self.offsets

    @cached_property
    def volume(self) -> float:
        return geo.hull_volume_centroid(self.vertex_array)[0]

    @cached_property
    def barycenter(self) -> np.ndarray:
        return geo.hull_volume_centroid(self.vertex_array)[1]

    @cached_property
    def is_lattice(self) -> bool:
        return all(c.denominator == 1 for v in self.vertices for c in v)

    def contains(self, x, margin: float = 0.0) -> bool:
        return bool(np.all(self.delta(x) > margin))

    def facet_points(self, k: int) -> np.ndarray:
        return self.vertex_array[list(self.facet_vertices[k])]


def halfspace(normal: Sequence[int], offset) -> HalfSpace:
    return HalfSpace(tuple(normal), geo.as_fraction(offset))


def _check_interior(normals, offsets):
    n = normals.shape[1]
    # maximise t subject to l_k.x + c_k >= t, t <= 1
    c = np.zeros(n + 1)
    c[-1] = -1.0
    a_ub = np.hstack([-normals, np.ones((normals.shape[0], 1))])
    res = linprog(c, A_ub=a_ub, b_ub=offsets, bounds=[(None, None)] * n + [(None, 1.0)])
    if res.status != 0 or -res.fun <= 1e-12:
        raise EmptyInterior("half-spaces have no common interior point")


def _check_bounded(normals):
    n = normals.shape[1]
    for i in range(n):
        for sign in (1.0, -1.0):
            c = np.zeros(n)
            c[i] = -sign
            res = linprog(c, A_ub=-normals, b_ub=np.zeros(len(normals)), bounds=[(-1, 1)] * n)
            if res.status == 0 and -res.fun > 1e-9:
                direction = np.round(res.x, 9).tolist()
                raise Unbounded(f"recession direction {direction}")


def build_polytope(facets: Sequence[HalfSpace]) -> Polytope:
    """Validate half-spaces and return the Delzant polytope they cut out.

    Raises
    ------
    Unbounded, EmptyInterior, NotDelzant, NonPrimitiveNormal
    """
    facets = tuple(facets)
    if not facets:
        raise ValidationError("facet list is empty")
    n = len(facets[0].normal)
    if n < 1 or any(len(h.normal) != n for h in facets):
        raise ValidationError("facet normals have inconsistent dimensions")
    normals = np.array([h.normal for h in facets], dtype=float)
    offsets = np.array([float(h.offset) for h in facets])
    _check_interior(normals, offsets)
    _check_bounded(normals)

    verts = geo.enumerate_vertices([h.normal for h in facets], [h.offset for h in facets])
    verts.sort()
    tight = [
        frozenset(k for k, h in enumerate(facets) if h.exact(v) == 0) for v in verts
    ]
    for v, t in zip(verts, tight):
        label = tuple(str(c) for c in v)
        if len(t) != n:
            raise NotDelzant(f"vertex {label} lies on {len(t)} facets, expected {n}", vertex=label)
        det = geo.exact_det([facets[k].normal for k in sorted(t)])
        if abs(det) != 1:
            raise NotDelzant(f"normals at vertex {label} have determinant {det}", vertex=label)
    vert_arr = np.array([[float(c) for c in v] for v in verts])
    facet_vertices = []
    for k, h in enumerate(facets):
        idx = tuple(i for i, t in enumerate(tight) if k in t)
        if not idx or (n > 1 and geo.affine_dim(vert_arr[list(idx)]) != n - 1):
            raise NotDelzant(f"facet {k} ({h.normal}, {h.offset}) is redundant")
        facet_vertices.append(idx)
    return Polytope(n, facets, tuple(verts), tuple(facet_vertices))


# -- standard examples ------------------------------------------------------


def interval(length=1) -> Polytope:
    return build_polytope([halfspace([1], 0), halfspace([-1], length)])


def simplex(dim: int = 2, scale=1) -> Polytope:
    hs = [halfspace([1 if j == i else 0 for j in range(dim)], 0) for i in range(dim)]
    hs.append(halfspace([-1] * dim, scale))
    return build_polytope(hs)


def box(sides: Sequence) -> Polytope:
    dim = len(sides)
    hs = []
    for i, s in enumerate(sides):
        e = [1 if j == i else 0 for j in range(dim)]
        hs.append(halfspace(e, 0))
        hs.append(halfspace([-v for v in e], s))
    return build_polytope(hs)


# -- boundary measure -------------------------------------------------------


@dataclass(frozen=True)
class SigmaMeasure:
    """Per-facet densities of the boundary measure.

    ``density[k]`` is the factor by which Euclidean (n-1)-measure on facet k
    is multiplied, ``per_facet[k]`` the resulting total mass.
    """

    density: tuple
    per_facet: tuple

    @property
    def total(self) -> float:
        return float(sum(self.per_facet))


def facet_euclidean_measure(poly: Polytope, k: int) -> float:
    if poly.dimension == 1:
        return 1.0
    return sum(geo.simplex_measure(s) for s in geo.hull_simplices(poly.facet_points(k)))


def sigma_measure(poly: Polytope) -> SigmaMeasure:
    dens = tuple(1.0 / float(np.linalg.norm(h.normal)) for h in poly.facets)
    mass = tuple(d * facet_euclidean_measure(poly, k) for k, d in enumerate(dens))
    return SigmaMeasure(dens, mass)


# -- quadrature ------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    """Interior rule plus one sigma-weighted rule per facet."""

    nodes: np.ndarray
    weights: np.ndarray
    facet_nodes: tuple
    facet_weights: tuple
    order: int

    def integrate(self, func: Callable) -> float:
        return float(np.dot(self.weights, func(self.nodes)))

    def integrate_boundary(self, func: Callable, per_facet: bool = False):
        vals = [float(np.dot(w, func(x))) for x, w in zip(self.facet_nodes, self.facet_weights)]
        return vals if per_facet else float(sum(vals))

    @property
    def boundary_nodes(self):
        """All boundary nodes and weights stacked, with a facet id per node."""
        ids = np.concatenate([np.full(len(w), k) for k, w in enumerate(self.facet_weights)])
        return np.vstack(self.facet_nodes), np.concatenate(self.facet_weights), ids


def quadrature(poly: Polytope, order: int = DEFAULT_ORDER) -> QuadratureRule:
    """Quadrature exact for polynomials of total degree <= ``order``.

    The interior rule cones each facet triangulation to the barycenter.
    """
    if order < 1:
        raise ValidationError("quadrature order must be >= 1")
    return _quadrature_cached(poly, int(order))


_RULE_CACHE: dict = {}


def _quadrature_cached(poly: Polytope, order: int) -> QuadratureRule:
    key = (poly.facets, order)
    rule = _RULE_CACHE.get(key)
    if rule is not None:
        return rule
    sig = sigma_measure(poly)
    b = poly.barycenter
    nodes, weights, fnodes, fweights = [], [], [], []
    for k in range(len(poly.facets)):
        pieces = geo.hull_simplices(poly.facet_points(k))
        fx, fw = [], []
        for s in pieces:
            x, w = geo.simplex_rule(s, order)
            fx.append(x)
            fw.append(w * sig.density[k])
            x, w = geo.simplex_rule(np.vstack([b, s]), order)
            nodes.append(x)
            weights.append(w)
        fnodes.append(np.vstack(fx))
        fweights.append(np.concatenate(fw))
    rule = QuadratureRule(np.vstack(nodes), np.concatenate(weights), tuple(fnodes), tuple(fweights), order)
    if len(_RULE_CACHE) > 64:
        _RULE_CACHE.clear()
    _RULE_CACHE[key] = rule
    return rule


# -- lattice points ---------------------------------------------------------


def lattice_points(poly: Polytope, k: int) -> np.ndarray:
    """Integer points of the dilate kP, lexicographically sorted, shape (N, n)."""
    if k < 1:
        raise ValidationError("k must be a positive integer")
    if not poly.is_lattice:
        raise NonLatticePolytope("polytope has non-integral vertices")
    lo = [int(min(v[i] for v in poly.vertices)) * k for i in range(poly.dimension)]
    hi = [int(max(v[i] for v in poly.vertices)) * k for i in range(poly.dimension)]
    normals = np.array([h.normal for h in poly.facets], dtype=np.int64)
    # offsets of a lattice Delzant polytope are integers
    offsets = np.array([int(h.offset) * k for h in poly.facets], dtype=np.int64)
    axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, poly.dimension)
    keep = np.all(grid @ normals.T + offsets >= 0, axis=1)
    return grid[keep]


def ehrhart_fit(poly: Polytope, k_max: int = 20) -> np.ndarray:
    """Least-squares fit of lattice-point counts of kP, k = 1..k_max.

    Returns polynomial coefficients ordered from the leading ``k**n`` term
    down to the constant term.
    """
    ks = np.arange(1, k_max + 1)
    counts = np.array([len(lattice_points(poly, int(k))) for k in ks], dtype=float)
    vander = np.vander(ks.astype(float), poly.dimension + 1)
    coef, *_ = np.linalg.lstsq(vander, counts, rcond=None)
    return coef


# -- exact integrals of delta^p log delta ----------------------------------


class _FaceIntegrator:
    """Integrates ``delta^p log delta`` over faces by a divergence recursion.

    On a d-face Q with a point x0 of its affine hull where delta vanishes,
    ``div((x - x0) g) = (d + p) g + delta^p`` for ``g = delta^p log delta``,
    so the integral over Q reduces to its facets and a polynomial integral.
    """

    def __init__(self, poly: Polytope):
        self.poly = poly
        self.verts = poly.vertex_array
        self.incidence = [frozenset(v) for v in poly.facet_vertices]
        self._subfaces: dict = {}
        self._memo: dict = {}

    def subfaces(self, face: frozenset, dim: int):
        got = self._subfaces.get(face)
        if got is None:
            got = []
            for inc in self.incidence:
                g = face & inc
                if g and g != face and g not in got:
                    if dim == 1 or geo.affine_dim(self.verts[sorted(g)]) == dim - 1:
                        got.append(g)
            self._subfaces[face] = got
        return got

    def integrate(self, face: frozenset, grad: np.ndarray, offset: float, p: int) -> float:
        key = (face, tuple(grad), offset, p)
        if key in self._memo:
            return self._memo[key]
        pts = self.verts[sorted(face)]
        origin, basis = geo.affine_frame(pts)
        d = basis.shape[0]
        vals = pts @ grad + offset
        scale = max(1.0, float(np.abs(vals).max()))
        local_grad = basis @ grad
        if d == 0 or np.linalg.norm(local_grad) <= 1e-14 * scale:
            value = float(vals.mean())
            vol = 1.0 if d == 0 else sum(geo.simplex_measure(s) for s in geo.hull_simplices(pts))
            out = vol * _xlogx_power(value, p)
            self._memo[key] = out
            return out
        t0 = -(origin @ grad + offset) * local_grad / float(local_grad @ local_grad)
        x0 = origin + t0 @ basis
        centroid = pts.mean(axis=0)
        boundary = 0.0
        for g in self.subfaces(face, d):
            gpts = self.verts[sorted(g)]
            if np.all(np.abs(gpts @ grad + offset) <= 1e-13 * scale):
                continue
            normal = _outward_normal(gpts, basis, centroid)
            h = float((gpts[0] - x0) @ normal)
            if abs(h) <= 1e-14 * scale:
                continue
            boundary += h * self.integrate(g, grad, offset, p)
        poly_part = geo.integrate_hull(pts, lambda x: (x @ grad + offset) ** p, order=max(p, 1))
        out = (boundary - poly_part) / (d + p)
        self._memo[key] = out
        return out


def _xlogx_power(value: float, p: int) -> float:
    if value <= 0.0:
        if p > 0:
            return 0.0
        raise ValidationError("log of a function vanishing identically on a face")
    return value**p * math.log(value)


def _outward_normal(sub_pts: np.ndarray, basis: np.ndarray, interior_point: np.ndarray) -> np.ndarray:
    """Unit normal to a codimension-one subface, within the face's affine hull."""
    d = basis.shape[0]
    local = (sub_pts - sub_pts[0]) @ basis.T
    if d == 1:
        nloc = np.array([1.0])
    else:
        _, _, vt = np.linalg.svd(local, full_matrices=True)
        nloc = vt[-1]
    normal = nloc @ basis
    if (interior_point - sub_pts[0]) @ normal > 0:
        normal = -normal
    return normal / np.linalg.norm(normal)


_INTEGRATORS: dict = {}


def _integrator(poly: Polytope) -> _FaceIntegrator:
    it = _INTEGRATORS.get(poly.facets)
    if it is None:
        it = _INTEGRATORS[poly.facets] = _FaceIntegrator(poly)
    return it


def integrate_delta_log(poly: Polytope, k: int, power: int = 0, on_facet: int | None = None) -> float:
    """Exact ``int delta_k^power log delta_k`` over P (dx) or over a facet.

    With ``on_facet=j`` the integral is over facet j against the sigma
    measure.  ``power`` must be a non-negative integer.
    """
    it = _integrator(poly)
    grad = poly.normals[k]
    off = float(poly.offsets[k])
    if on_facet is None:
        face = frozenset(range(len(poly.vertices)))
        return it.integrate(face, grad, off, power)
    face = it.incidence[on_facet]
    dens = sigma_measure(poly).density[on_facet]
    if poly.dimension == 1:
        return dens * _xlogx_power(float(poly.delta(poly.facet_points(on_facet)[0])[k]), power)
    return dens * it.integrate(face, grad, off, power)


def polytope_from_json(data: dict) -> Polytope:
    try:
        facets = [halfspace(f["normal"], Fraction(str(f["offset"]))) for f in data["facets"]]
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise ValidationError(f"malformed polytope description: {exc}") from exc
    poly = build_polytope(facets)
    if "dim" in data and int(data["dim"]) != poly.dimension:
        raise ValidationError(f"declared dim {data['dim']} does not match normals")
    return poly


def polytope_to_json(poly: Polytope) -> dict:
    return {
        "dim": poly.dimension,
        "facets": [{"normal": list(h.normal), "offset": str(h.offset)} for h in poly.facets],
    }
