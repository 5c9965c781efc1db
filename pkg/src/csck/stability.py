"""Toric Donaldson-Futaki functional, K-energy and test-configuration weights.

Piecewise-linear convex functions ``f = max_i (<a_i, x> + b_i)`` play the
role of toric test configurations.  Their Futaki value is computed exactly
cell by cell; weight spectra on lattice points of ``kP`` give the
large-``k`` cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog

from . import _geometry as geo
from .errors import DegenerateConfiguration, InsufficientData, SingularHessian, ValidationError
from .polytope import (
    Polytope,
    integrate_delta_log,
    lattice_points,
    quadrature,
    sigma_measure,
)
from .potentials import SymplecticPotential, futaki_normalization


@dataclass(frozen=True)
class PLConvexFunction:
    """``f(x) = max_i (<a_i, x> + b_i)`` with rational data."""

    pieces: tuple

    def __post_init__(self):
        if not self.pieces:
            raise ValidationError("a piecewise-linear function needs at least one piece")
        norm = []
        dim = None
        for a, b in self.pieces:
            a = tuple(geo.as_fraction(v) for v in np.atleast_1d(a).tolist())
            if dim is None:
                dim = len(a)
            elif len(a) != dim:
                raise ValidationError("pieces have inconsistent dimensions")
            norm.append((a, geo.as_fraction(b)))
        object.__setattr__(self, "pieces", tuple(dict.fromkeys(norm)))

    @classmethod
    def affine(cls, slope, offset=0) -> "PLConvexFunction":
        return cls(((tuple(np.atleast_1d(slope).tolist()), offset),))

    @classmethod
    def constant(cls, dim: int, value=1) -> "PLConvexFunction":
        return cls((((0,) * dim, value),))

    @classmethod
    def crease(cls, normal, offset) -> "PLConvexFunction":
        """``max(0, <normal, x> + offset)``."""
        normal = tuple(np.atleast_1d(normal).tolist())
        return cls((((0,) * len(normal), 0), (normal, offset)))

    @property
    def dimension(self) -> int:
        return len(self.pieces[0][0])

    @property
    def slopes(self) -> np.ndarray:
        return np.array([[float(v) for v in a] for a, _ in self.pieces])

    @property
    def offsets(self) -> np.ndarray:
        return np.array([float(b) for _, b in self.pieces])

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.dimension)
        return np.max(x @ self.slopes.T + self.offsets, axis=1)

    def exact(self, point) -> Fraction:
        return max(sum(ai * Fraction(xi) for ai, xi in zip(a, point)) + b for a, b in self.pieces)

    def __add__(self, other: "PLConvexFunction") -> "PLConvexFunction":
        pieces = [
            (tuple(x + y for x, y in zip(a1, a2)), b1 + b2)
            for a1, b1 in self.pieces
            for a2, b2 in other.pieces
        ]
        return PLConvexFunction(tuple(pieces))

    def scaled(self, factor) -> "PLConvexFunction":
        factor = geo.as_fraction(factor)
        if factor < 0:
            raise ValidationError("only non-negative multiples stay convex")
        if factor == 0:
            return PLConvexFunction.constant(self.dimension, 0)
        return PLConvexFunction(tuple((tuple(factor * v for v in a), factor * b) for a, b in self.pieces))

    def simplify(self, poly: Polytope) -> "PLConvexFunction":
        """Drop pieces that are maximal only on a null subset of ``poly``."""
        keep = [p for i, p in enumerate(self.pieces) if _cell_has_interior(poly, self, i)]
        return PLConvexFunction(tuple(keep)) if keep else self

    def to_json(self) -> dict:
        return {"pieces": [{"a": [str(v) for v in a], "b": str(b)} for a, b in self.pieces]}

    @classmethod
    def from_json(cls, data: dict) -> "PLConvexFunction":
        try:
            pieces = [
                (tuple(Fraction(str(v)) for v in p["a"]), Fraction(str(p["b"]))) for p in data["pieces"]
            ]
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise ValidationError(f"malformed piecewise-linear function: {exc}") from exc
        return cls(tuple(pieces))


def _cell_constraints(poly: Polytope, f: PLConvexFunction, i: int):
    normals = [tuple(Fraction(v) for v in h.normal) for h in poly.facets]
    offsets = [h.offset for h in poly.facets]
    ai, bi = f.pieces[i]
    for j, (aj, bj) in enumerate(f.pieces):
        if j != i:
            normals.append(tuple(x - y for x, y in zip(ai, aj)))
            offsets.append(bi - bj)
    return normals, offsets


def _cell_has_interior(poly, f, i) -> bool:
    normals, offsets = _cell_constraints(poly, f, i)
    a = np.array([[float(v) for v in row] for row in normals])
    c = np.array([float(v) for v in offsets])
    n = poly.dimension
    obj = np.zeros(n + 1)
    obj[-1] = -1.0
    res = linprog(obj, A_ub=np.hstack([-a, np.ones((len(c), 1))]), b_ub=c, bounds=[(None, None)] * n + [(None, 1.0)])
    return res.status == 0 and -res.fun > 1e-12


def _check_dimension(poly: Polytope, f: PLConvexFunction) -> None:
    if f.dimension != poly.dimension:
        raise ValidationError(f"PL function has dimension {f.dimension}, polytope has {poly.dimension}")


def _cells(poly: Polytope, f: PLConvexFunction):
    """Cells of linearity as (piece index, interior vertex array, per-facet vertex arrays)."""
    _check_dimension(poly, f)
    out = []
    n = poly.dimension
    for i in range(len(f.pieces)):
        normals, offsets = _cell_constraints(poly, f, i)
        verts = geo.enumerate_vertices(normals, offsets)
        if not verts:
            continue
        arr = np.array([[float(c) for c in v] for v in verts])
        if geo.affine_dim(arr) < n:
            continue
        facet_parts = []
        for h in poly.facets:
            fv = geo.enumerate_vertices(normals, offsets, equalities=[(h.normal, h.offset)])
            farr = np.array([[float(c) for c in v] for v in fv]) if fv else np.zeros((0, n))
            if len(farr) and (n == 1 or geo.affine_dim(farr) == n - 1):
                facet_parts.append(farr)
            else:
                facet_parts.append(None)
        out.append((i, arr, facet_parts))
    return out


def _pl_integrals(poly: Polytope, f: PLConvexFunction):
    """Exact ``int_P f dx`` and per-facet ``int f dsigma`` for PL ``f``."""
    sig = sigma_measure(poly)
    interior = 0.0
    boundary = np.zeros(len(poly.facets))
    for i, arr, facet_parts in _cells(poly, f):
        a, b = f.slopes[i], f.offsets[i]
        vol, cen = geo.hull_volume_centroid(arr)
        interior += vol * (cen @ a + b)
        for k, farr in enumerate(facet_parts):
            # 1-D facets are points: handled below to avoid double counting
            if farr is None:
                continue
            if poly.dimension == 1:
                continue
            fvol, fcen = geo.hull_volume_centroid(farr)
            boundary[k] += sig.density[k] * fvol * (fcen @ a + b)
    if poly.dimension == 1:
        boundary = np.array(sig.density) * f(poly.vertex_array[[v[0] for v in poly.facet_vertices]])
    return interior, boundary


def futaki(poly: Polytope, f, order: int = 12) -> float:
    """``-mu int_P f dx + int_{boundary} f dsigma``.

    Exact (cellwise) for :class:`PLConvexFunction`, quadrature otherwise.
    """
    mu = futaki_normalization(poly)
    if isinstance(f, PLConvexFunction):
        interior, boundary = _pl_integrals(poly, f)
        return float(-mu * interior + boundary.sum())
    rule = quadrature(poly, order)
    return -mu * rule.integrate(f) + rule.integrate_boundary(f)


def classical_futaki_character(poly: Polytope) -> list:
    """Futaki values of the coordinate functions; zero when the character vanishes."""
    n = poly.dimension
    return [futaki(poly, PLConvexFunction.affine([1 if j == i else 0 for j in range(n)])) for i in range(n)]


def toric_k_energy(u: SymplecticPotential, order: int = 12) -> float:
    """``-int_P log det(u_ij) dx + F(u)`` with the log singularities split off.

    For ``c > 0``, ``log det Hess u = g - sum_k log delta_k`` where
    ``g = log(det Hess u * prod delta_k)`` is smooth; the log terms and the
    canonical part of ``F(u)`` are integrated in closed form.
    """
    poly = u.polytope
    rule = quadrature(poly, order)
    hess = u.hessian(rule.nodes)
    sign, logdet = np.linalg.slogdet(hess)
    if np.any(sign <= 0):
        bad = int(np.argmin(sign))
        raise SingularHessian(f"Hessian not positive definite at {rule.nodes[bad].tolist()}", point=rule.nodes[bad].tolist())
    deltas = poly.delta(rule.nodes)
    kfacets = range(len(poly.facets))
    if u.canonical > 0:
        smooth = logdet + np.log(deltas).sum(axis=1)
        log_int = float(rule.weights @ smooth) - sum(integrate_delta_log(poly, k, 0) for k in kfacets)
    else:
        log_int = float(rule.weights @ logdet)
    mu = futaki_normalization(poly)
    corr_val = lambda x: u.correction.derivatives(x, 0)[0]  # noqa: E731
    u_int = u.canonical * sum(integrate_delta_log(poly, k, 1) for k in kfacets) + rule.integrate(corr_val)
    u_bdry = rule.integrate_boundary(corr_val)
    if u.canonical:
        u_bdry += u.canonical * sum(
            integrate_delta_log(poly, k, 1, on_facet=j) for j in kfacets for k in kfacets if k != j
        )
    return -log_int + (-mu * u_int + u_bdry)


# -- weight spectra --------------------------------------------------------


@dataclass(frozen=True)
class WeightSpectrum:
    """Weights ``B_k(alpha) = k f(alpha / k)`` on lattice points of ``kP``.

    ``B`` holds integers after multiplying by ``scale``; ``A`` is the
    traceless part of ``B`` (same units).  Divide by ``scale`` to recover
    the unscaled weights.
    """

    k: int
    points: np.ndarray
    B: np.ndarray
    A: np.ndarray
    scale: int

    @property
    def weights(self) -> np.ndarray:
        return self.B / self.scale

    @property
    def traceless(self) -> np.ndarray:
        return self.A / self.scale

    @property
    def trace(self) -> float:
        return float(self.B.sum()) / self.scale


def weights_from_pl(poly: Polytope, f: PLConvexFunction, k: int) -> WeightSpectrum:
    _check_dimension(poly, f)
    pts = lattice_points(poly, k)
    exact = [max(sum(ai * int(x) for ai, x in zip(a, p)) + k * b for a, b in f.pieces) for p in pts]
    scale = 1
    for v in exact:
        scale = scale * v.denominator // math.gcd(scale, v.denominator)
    big = np.array([int(v * scale) for v in exact], dtype=np.int64)
    mean = Fraction(int(big.sum()), len(big))
    traceless = np.array([float(Fraction(int(b)) - mean) for b in big])
    return WeightSpectrum(int(k), pts, big, traceless, scale)


def _check_k_list(k_list) -> list:
    ks = sorted(set(int(k) for k in k_list))
    if len(ks) < 3 or ks[0] < 2:
        raise InsufficientData("need at least three distinct k values, each >= 2")
    return ks


def _fit_inverse_powers(ks, values, terms: int = 4):
    ks = np.asarray(ks, dtype=float)
    terms = min(terms, len(ks))
    design = np.stack([ks ** (-j) for j in range(terms)], axis=1)
    coef, *_ = np.linalg.lstsq(design, np.asarray(values, dtype=float), rcond=None)
    resid = np.asarray(values) - design @ coef
    return coef, resid


def futaki_from_weights(poly: Polytope, f: PLConvexFunction, k_list: Sequence[int]):
    """Estimate the Futaki invariant from ``Trace B_k / (k (N_k + 1))``.

    Fits a polynomial in ``1/k`` (up to cubic, fewer terms when fewer ``k``
    are given) and returns ``F_est = -c1`` with a report.
    The calibrated value ``-2 Vol F_est`` matches :func:`futaki`.
    """
    ks = _check_k_list(k_list)
    ratios = []
    for k in ks:
        spec = weights_from_pl(poly, f, k)
        ratios.append(spec.trace / (k * len(spec.points)))
    coef, resid = _fit_inverse_powers(ks, ratios)
    f_est = -float(coef[1])
    calibrated = -2.0 * poly.volume * f_est
    report = {
        "k": ks,
        "ratios": [float(r) for r in ratios],
        "fit_coefficients": [float(c) for c in coef],
        "fit_residuals": [float(r) for r in resid],
        "F_est": f_est,
        "calibrated": calibrated,
        "polytope_futaki": futaki(poly, f),
    }
    return f_est, report


def dt_norm(poly: Polytope, f: PLConvexFunction, k_list: Sequence[int], report: bool = False):
    """Extrapolated ``lim ||A_k|| / k^(n/2 + 1)``."""
    ks = _check_k_list(k_list)
    n = poly.dimension
    vals = []
    for k in ks:
        spec = weights_from_pl(poly, f, k)
        vals.append(float(np.linalg.norm(spec.traceless)) / k ** (n / 2 + 1))
    if not any(vals):
        value, coef, resid = 0.0, np.zeros(3), np.zeros(len(ks))
    else:
        coef, resid = _fit_inverse_powers(ks, vals)
        value = float(coef[0])
    if report:
        return value, {"k": ks, "scaled_norms": vals, "fit_coefficients": [float(c) for c in coef], "D": value}
    return value


def calabi_lower_bound(poly: Polytope, f: PLConvexFunction, k_list: Sequence[int]):
    """``-DF / D`` with DF the calibrated weight-asymptotic Futaki value.

    Returns ``(bound, report)``; ``report["active"]`` says whether the bound
    is positive (informative) or vacuous.
    """
    d = dt_norm(poly, f, k_list)
    if d <= 1e-12:
        raise DegenerateConfiguration("D vanishes for this configuration")
    f_est, rep = futaki_from_weights(poly, f, k_list)
    bound = -rep["calibrated"] / d
    return bound, {"D": d, "F_est": f_est, "calibrated": rep["calibrated"], "bound": bound, "active": bound > 0}


# -- destabilizer search ---------------------------------------------------


def l2_deviation(poly: Polytope, f: PLConvexFunction) -> float:
    """``||f - mean(f)||`` in ``L^2(P, dx)``, exact via degree-2 cell quadrature."""
    first = 0.0
    second = 0.0
    for i, arr, _ in _cells(poly, f):
        a, b = f.slopes[i], f.offsets[i]
        for s in geo.hull_simplices(arr):
            x, w = geo.simplex_rule(s, 2)
            v = x @ a + b
            first += float(w @ v)
            second += float(w @ v**2)
    vol = poly.volume
    return math.sqrt(max(second - first**2 / vol, 0.0))


def crease_grid(poly: Polytope, max_entry: int = 1, n_offsets: int = 10) -> list:
    """Simple creases ``(normal, offset)`` whose crease hyperplane cuts the interior.

    Normals are primitive integer vectors with entries in ``[-max_entry, max_entry]``;
    offsets are evenly spaced rationals strictly inside the range of
    ``-<normal, x>`` over the vertices.
    """
    n = poly.dimension
    rng = range(-max_entry, max_entry + 1)
    normals = []
    for v in np.array(np.meshgrid(*[list(rng)] * n, indexing="ij")).reshape(n, -1).T:
        v = tuple(int(c) for c in v)
        if any(v) and math.gcd(*(abs(c) for c in v)) == 1:
            normals.append(v)
    grid = []
    for a in normals:
        vals = [sum(Fraction(c) * x for c, x in zip(a, vert)) for vert in poly.vertices]
        lo, hi = min(vals), max(vals)
        for j in range(1, n_offsets + 1):
            t = lo + (hi - lo) * Fraction(j, n_offsets + 1)
            grid.append((a, -t))
    return grid


def destabilizer_search(poly: Polytope, grid: Sequence | None = None, *, max_entry: int = 1,
                        n_offsets: int = 10, executor_map: Callable = map) -> dict:
    """Scan simple creases ``max(0, <a, x> + b)`` and minimise the normalised Futaki value."""
    if grid is None:
        grid = crease_grid(poly, max_entry, n_offsets)
    candidates = []
    for a, b in grid:
        a = tuple(geo.as_fraction(v) for v in a)
        b = geo.as_fraction(b)
        vals = [sum(c * x for c, x in zip(a, vert)) + b for vert in poly.vertices]
        if min(vals) < 0 < max(vals):
            candidates.append((a, b))

    def evaluate(cand):
        f = PLConvexFunction.crease(cand[0], cand[1])
        value = futaki(poly, f)
        norm = l2_deviation(poly, f)
        return value, value / norm

    results = list(executor_map(evaluate, candidates))
    if not results:
        return {"evaluated": 0, "verdict": "no crease crosses the interior"}
    best = int(np.argmin([r[1] for r in results]))
    a, b = candidates[best]
    found = results[best][1] <= 0
    return {
        "evaluated": len(results),
        "minimizer": {"normal": [str(v) for v in a], "offset": str(b)},
        "futaki": results[best][0],
        "normalized_futaki": results[best][1],
        "destabilizer_found": bool(found),
        "verdict": "destabilizer candidate found" if found else "no destabilizer on grid",
    }
