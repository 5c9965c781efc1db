"""Symplectic potentials on a Delzant polytope and Abreu's curvature operator.

A potential is ``u = c * sum_k delta_k log delta_k + g`` with ``g`` smooth on
the closed polytope.  Derivatives of the canonical part are closed form; the
correction supplies its own derivatives up to order 4.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import SingularHessian, ValidationError
from .polytope import Polytope, quadrature, sigma_measure

DEFAULT_MARGIN = 1e-6


class Correction:
    """Smooth correction term; subclasses return derivative tensors.

    ``derivatives(x, order)`` takes points of shape (m, n) and returns a list
    ``[value (m,), grad (m,n), hess (m,n,n), third (m,n,n,n), fourth (m,n,n,n,n)]``
    truncated after ``order``.
    """

    def derivatives(self, x: np.ndarray, order: int) -> list:
        raise NotImplementedError


@dataclass(frozen=True)
class Polynomial(Correction):
    """Polynomial ``sum coef * x^exps`` with exact term-wise differentiation."""

    terms: tuple = ()

    @classmethod
    def from_terms(cls, terms) -> "Polynomial":
        merged: dict = {}
        for exps, coef in terms:
            key = tuple(int(e) for e in exps)
            if any(e < 0 for e in key):
                raise ValidationError(f"negative exponent in {key}")
            merged[key] = merged.get(key, 0.0) + float(coef)
        return cls(tuple(sorted((k, v) for k, v in merged.items() if v != 0.0)))

    def __add__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial.from_terms(list(self.terms) + list(other.terms))

    def scaled(self, factor: float) -> "Polynomial":
        return Polynomial.from_terms([(e, c * factor) for e, c in self.terms])

    def _partial(self, x: np.ndarray, multi: Sequence[int]) -> np.ndarray:
        out = np.zeros(x.shape[0])
        for exps, coef in self.terms:
            c = coef
            mono = np.ones(x.shape[0])
            for i, (e, m) in enumerate(zip(exps, multi)):
                if m > e:
                    c = 0.0
                    break
                for j in range(m):
                    c *= e - j
                if e - m:
                    mono = mono * x[:, i] ** (e - m)
            if c:
                out += c * mono
        return out

    def derivatives(self, x, order):
        x = np.atleast_2d(x)
        m, n = x.shape
        out = []
        for r in range(order + 1):
            shape = (m,) + (n,) * r
            arr = np.empty(shape)
            cache: dict = {}
            for idx in itertools.product(range(n), repeat=r):
                multi = tuple(idx.count(i) for i in range(n))
                if multi not in cache:
                    cache[multi] = self._partial(x, multi)
                arr[(slice(None),) + idx] = cache[multi]
            out.append(arr)
        return out


@dataclass(frozen=True)
class CallableCorrection(Correction):
    """Correction given by callables for successive derivative tensors.

    ``funcs[r](x)`` must return the order-r tensor for points ``x`` (m, n).
    """

    funcs: tuple

    def derivatives(self, x, order):
        if order >= len(self.funcs):
            raise ValidationError(f"correction supplies derivatives only up to order {len(self.funcs) - 1}")
        x = np.atleast_2d(x)
        return [np.asarray(f(x), dtype=float) for f in self.funcs[: order + 1]]


@dataclass(frozen=True)
class SumCorrection(Correction):
    """Linear combination ``sum w_i g_i`` of corrections."""

    parts: tuple

    def derivatives(self, x, order):
        total = None
        for w, g in self.parts:
            d = g.derivatives(x, order)
            total = [w * a for a in d] if total is None else [t + w * a for t, a in zip(total, d)]
        return total


@dataclass(frozen=True)
class SymplecticPotential:
    polytope: Polytope
    canonical: float = 1.0
    correction: Correction = field(default_factory=Polynomial)

    def __post_init__(self):
        if self.canonical < 0:
            raise ValidationError("canonical coefficient must be non-negative")

    def derivatives(self, x, order: int = 2, margin: float = 0.0) -> list:
        """Value and derivative tensors at points ``x`` of shape (m, n)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        poly = self.polytope
        d = poly.delta(x)
        if np.any(d <= margin):
            bad = x[np.argmin(d.min(axis=1))]
            raise ValidationError(f"point {bad.tolist()} is not strictly interior (margin {margin})")
        lmat = poly.normals
        c = self.canonical
        out = [c * np.sum(d * np.log(d), axis=1)]
        if order >= 1:
            out.append(c * (np.log(d) + 1.0) @ lmat)
        if order >= 2:
            out.append(c * np.einsum("mk,ki,kj->mij", 1.0 / d, lmat, lmat))
        if order >= 3:
            out.append(-c * np.einsum("mk,ki,kj,kl->mijl", d**-2, lmat, lmat, lmat))
        if order >= 4:
            out.append(2 * c * np.einsum("mk,ki,kj,kl,kp->mijlp", d**-3, lmat, lmat, lmat, lmat))
        corr = self.correction.derivatives(x, order)
        return [a + b for a, b in zip(out, corr)]

    def __call__(self, x):
        return self.derivatives(x, 0)[0]

    def gradient(self, x):
        return self.derivatives(x, 1)[1]

    def hessian(self, x):
        return self.derivatives(x, 2)[2]

    def plus(self, correction: Correction, weight: float = 1.0) -> "SymplecticPotential":
        if isinstance(correction, Polynomial) and isinstance(self.correction, Polynomial):
            return SymplecticPotential(self.polytope, self.canonical, self.correction + correction.scaled(weight))
        return SymplecticPotential(
            self.polytope, self.canonical, SumCorrection(((1.0, self.correction), (weight, correction)))
        )

    def add_affine(self, slope, constant: float = 0.0) -> "SymplecticPotential":
        n = self.polytope.dimension
        terms = [((0,) * n, constant)]
        for i, a in enumerate(np.atleast_1d(slope)):
            terms.append((tuple(1 if j == i else 0 for j in range(n)), float(a)))
        return self.plus(Polynomial.from_terms(terms))


def guillemin_potential(poly: Polytope) -> SymplecticPotential:
    """Canonical potential ``sum_k delta_k log delta_k``."""
    return SymplecticPotential(poly, 1.0, Polynomial())


def potential_with_polynomial(poly: Polytope, terms, canonical: float = 1.0) -> SymplecticPotential:
    return SymplecticPotential(poly, canonical, Polynomial.from_terms(terms))


@dataclass(frozen=True)
class HessianField:
    """Hessian, its inverse and derivatives of the inverse at points.

    Attributes have a leading axis over points: ``hess`` (m,n,n),
    ``inverse`` (m,n,n), ``d_inverse[m,a,b,i] = d/dx_i u^{ab}``,
    ``dd_inverse[m,a,b,i,j] = d^2/dx_i dx_j u^{ab}``.
    """

    points: np.ndarray
    hess: np.ndarray
    inverse: np.ndarray
    d_inverse: np.ndarray
    dd_inverse: np.ndarray


def hessian_field(u: SymplecticPotential, x, margin: float = DEFAULT_MARGIN) -> HessianField:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _, _, hess, third, fourth = u.derivatives(x, 4, margin=margin)
    try:
        np.linalg.cholesky(hess)
    except np.linalg.LinAlgError:
        eig = np.linalg.eigvalsh(hess).min(axis=1)
        bad = int(np.argmin(eig))
        raise SingularHessian(f"Hessian not positive definite at {x[bad].tolist()}", point=x[bad].tolist())
    inv = np.linalg.inv(hess)
    # d_i G = -G (d_i H) G
    d_inv = -np.einsum("mac,mcdi,mdb->mabi", inv, third, inv)
    # d_j d_i G = G H_j G H_i G + G H_i G H_j G - G H_ij G
    t1 = np.einsum("mac,mcdj,mde,mefi,mfb->mabij", inv, third, inv, third, inv)
    t3 = np.einsum("mac,mcdij,mdb->mabij", inv, fourth, inv)
    dd_inv = t1 + np.swapaxes(t1, 3, 4) - t3
    return HessianField(x, hess, inv, d_inv, dd_inv)


def abreu_scalar_curvature(u: SymplecticPotential, x, margin: float = DEFAULT_MARGIN):
    """Scalar curvature ``-sum_ij d^2 u^{ij} / dx_i dx_j``.

    ``x`` may be a single point (returns a float) or an array of points.
    """
    x = np.asarray(x, dtype=float)
    n = u.polytope.dimension
    single = x.ndim == 0 or (x.ndim == 1 and n > 1)
    pts = x.reshape(-1, n)
    _, _, hess, third, fourth = u.derivatives(pts, 4, margin=margin)
    lam, vec = np.linalg.eigh(hess)
    if np.any(lam <= 0):
        bad = int(np.argmin(lam.min(axis=1)))
        raise SingularHessian(f"Hessian not positive definite at {pts[bad].tolist()}", point=pts[bad].tolist())
    # R is invariant under linear changes of coordinates; evaluate in the
    # frame where the Hessian is the identity to avoid cancellation near the boundary
    frame = vec / np.sqrt(lam)[:, None, :]
    t = np.einsum("mabc,mai,mbj,mck->mijk", third, frame, frame, frame)
    q = np.einsum("mabcd,mai,mbj,mck,mdl->mijkl", fourth, frame, frame, frame, frame)
    r = -(np.einsum("micj,mcji->m", t, t) + np.einsum("mici,mcjj->m", t, t) - np.einsum("miijj->m", q))
    return float(r[0]) if single else r


def legendre_to_kahler(u: SymplecticPotential, x, margin: float = DEFAULT_MARGIN):
    """Map an interior point to ``(xi, phi(xi))`` with ``xi = grad u(x)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    val, grad, hess = u.derivatives(x[None, :], 2, margin=margin)
    try:
        np.linalg.cholesky(hess[0])
    except np.linalg.LinAlgError:
        raise SingularHessian(f"Hessian not positive definite at {x.tolist()}", point=x.tolist())
    xi = grad[0]
    return xi, float(x @ xi - val[0])


def kahler_to_symplectic(u: SymplecticPotential, xi, start=None, tol: float = 1e-13, max_iter: int = 200):
    """Invert ``xi = grad u(x)`` by damped Newton on the convex ``u - <xi, x>``."""
    poly = u.polytope
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    x = np.array(poly.barycenter if start is None else start, dtype=float)

    def merit(p):
        return float(u(p[None, :])[0] - xi @ p)

    for _ in range(max_iter):
        _, grad, hess = u.derivatives(x[None, :], 2)
        resid = grad[0] - xi
        if np.max(np.abs(resid)) < tol * max(1.0, np.max(np.abs(xi))):
            return x
        step = np.linalg.solve(hess[0], resid)
        t = 1.0
        f0 = merit(x)
        while True:
            cand = x - t * step
            if np.all(poly.delta(cand) > 0) and merit(cand) <= f0 + 1e-15 * abs(f0):
                break
            t *= 0.5
            if t < 1e-16:
                return x
        x = cand
    return x


def futaki_normalization(poly: Polytope) -> float:
    """``sigma(boundary) / Vol``: the constant making the Futaki functional kill constants."""
    return sigma_measure(poly).total / poly.volume


def mean_scalar_curvature(u: SymplecticPotential, order: int = 12) -> float:
    rule = quadrature(u.polytope, order)
    r = abreu_scalar_curvature(u, rule.nodes, margin=0.0)
    return float(rule.weights @ r) / float(rule.weights.sum())


def convexity_report(u: SymplecticPotential, order: int = 12) -> dict:
    """Check positive definiteness of the Hessian at interior quadrature nodes."""
    rule = quadrature(u.polytope, order)
    eig = np.linalg.eigvalsh(u.hessian(rule.nodes)).min(axis=1)
    bad = np.flatnonzero(eig <= 0)
    return {
        "nodes": int(len(eig)),
        "min_eigenvalue": float(eig.min()),
        "failures": [rule.nodes[i].tolist() for i in bad],
    }


def finite_difference_curvature(u: SymplecticPotential, x, h: float = 1e-4) -> float:
    """Abreu curvature by central differences of ``u^{ij}`` (test oracle)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]

    def inv(p):
        return np.linalg.inv(u.hessian(p[None, :])[0])

    total = 0.0
    eye = np.eye(n)
    for i in range(n):
        for j in range(n):
            if i == j:
                d2 = (inv(x + h * eye[i]) - 2 * inv(x) + inv(x - h * eye[i])) / h**2
            else:
                d2 = (
                    inv(x + h * eye[i] + h * eye[j])
                    - inv(x + h * eye[i] - h * eye[j])
                    - inv(x - h * eye[i] + h * eye[j])
                    + inv(x - h * eye[i] - h * eye[j])
                ) / (4 * h**2)
            total += d2[i, j]
    return -total


def potential_from_json(data: dict, poly: Polytope) -> SymplecticPotential:
    corr = data.get("correction") or {"type": "poly", "terms": []}
    if corr.get("type", "poly") != "poly":
        raise ValidationError(f"unsupported correction type {corr.get('type')!r}")
    try:
        terms = [(t["exps"], float(t["coef"])) for t in corr.get("terms", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed correction term: {exc}") from exc
    if any(len(e) != poly.dimension for e, _ in terms):
        raise ValidationError("correction exponent length does not match dimension")
    return SymplecticPotential(poly, float(data.get("canonical", 1.0)), Polynomial.from_terms(terms))


SmoothFunction = Callable[[np.ndarray], np.ndarray]
