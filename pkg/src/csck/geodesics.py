"""Geodesic segments and rays of invariant metrics on P^1.

Points of P^1 are labelled by the Fubini-Study moment coordinate ``x`` in
``[0, 1]``; on the open orbit ``xi = logit(x)``.  A metric with relative
potential ``phi`` has Kahler potential ``psi(xi) = -log(1 - x) + phi(x)`` and
moment map ``y = x + x (1 - x) phi'(x)``.  Its Legendre transform ``u(y)``
satisfies ``u'(y) = logit(x(y))`` where ``x(y)`` inverts the moment map.

Exact geodesics interpolate ``u`` linearly.  Bergman approximations live on
the torus-invariant Bergman slice of :mod:`csck.bergman`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .bergman import BergmanPotential, _gauss, log_binomial, section_norms
from .errors import NoConvergence, SingularHessian, ValidationError
from .p1metric import InvariantMetricP1, logit
from .polytope import Polytope, lattice_points, quadrature
from .potentials import SumCorrection, SymplecticPotential
from .stability import PLConvexFunction, weights_from_pl


# ---------------------------------------------------------------- symplectic side


def exact_toric_geodesic(u0: SymplecticPotential, u1: SymplecticPotential, t: float,
                         check_order: int = 8) -> SymplecticPotential:
    """``(1 - t) u0 + t u1``, the geodesic in symplectic coordinates.

    The endpoints are returned unchanged at ``t = 0`` and ``t = 1``.  For
    other ``t`` convexity of the interpolant is checked at quadrature nodes.
    """
    if u0.polytope is not u1.polytope and u0.polytope.facets != u1.polytope.facets:
        raise ValidationError("potentials live on different polytopes")
    if t == 0:
        return u0
    if t == 1:
        return u1
    ut = SymplecticPotential(
        u0.polytope,
        (1 - t) * u0.canonical + t * u1.canonical,
        SumCorrection(((1 - t, u0.correction), (t, u1.correction))),
    )
    nodes = quadrature(u0.polytope, check_order).nodes
    eig = np.linalg.eigvalsh(ut.hessian(nodes)).min(axis=1)
    if eig.min() <= 0:
        i = int(np.argmin(eig))
        raise SingularHessian(f"interpolant is not convex at t = {t}", nodes[i].tolist())
    return ut


def _safeguarded_newton(func, lo, hi, start, tol: float = 1e-15, max_iter: int = 200):
    """Vectorised root of increasing ``func`` on ``[lo, hi]``; ``func`` returns (value, slope)."""
    lo, hi = np.array(lo, dtype=float), np.array(hi, dtype=float)
    z = np.clip(np.array(start, dtype=float), lo, hi)
    for _ in range(max_iter):
        val, slope = func(z)
        lo = np.where(val < 0, z, lo)
        hi = np.where(val > 0, z, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = z - val / slope
        inside = np.isfinite(step) & (step > lo) & (step < hi)
        new = np.where(inside, step, 0.5 * (lo + hi))
        if np.max(np.abs(new - z)) <= tol:
            return new
        z = new
    raise NoConvergence("Newton iteration for the Legendre transform did not converge", float(np.max(np.abs(val))))


def inverse_moment(metric: InvariantMetricP1, y) -> np.ndarray:
    """Background coordinate ``x`` with ``metric.moment(x) = y``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))

    def f(x):
        return metric.moment(x) - y, metric.density(x)

    return _safeguarded_newton(f, np.zeros_like(y), np.ones_like(y), y)


@dataclass(frozen=True)
class GeodesicSlice:
    """Exact geodesic between two metrics at one time, sampled at points ``x``.

    ``phi`` is relative to the start metric.  ``phi_abs`` is relative to
    Fubini-Study.  ``dphi_abs`` is its ``x`` derivative and ``density`` the
    metric density in ``dx``.  ``phidot`` and ``phiddot`` are the exact
    time derivatives.
    """

    t: float
    x: np.ndarray
    y: np.ndarray
    phi: np.ndarray
    phi_abs: np.ndarray
    dphi_abs: np.ndarray
    density: np.ndarray
    phidot: np.ndarray
    phiddot: np.ndarray


def _legendre_pieces(metric: InvariantMetricP1, y: np.ndarray):
    xi_pt = inverse_moment(metric, y)
    w = xi_pt * (1 - xi_pt)
    u_val = y * logit(xi_pt) + np.log1p(-xi_pt) - metric.phi(xi_pt)
    return xi_pt, logit(xi_pt), 1.0 / (w * metric.density(xi_pt)), u_val


def metric_geodesic(m0: InvariantMetricP1, m1: InvariantMetricP1, x, t: float) -> GeodesicSlice:
    """Exact geodesic from ``m0`` to ``m1`` at time ``t`` and points ``x`` in ``(0, 1)``.

    Solves ``(1 - t) u0'(y) + t u1'(y) = logit(x)`` for the moment value
    ``y``; then ``psi_t(xi) = -[(1 - t) (log(1 - x0) - phi0(x0)) + t (log(1 - x1) - phi1(x1))]``
    with ``x_i`` the preimages of ``y``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any((x <= 0) | (x >= 1)):
        raise ValidationError("geodesic points must lie strictly inside (0, 1)")
    target = logit(x)

    def g(y):
        xa, xb = inverse_moment(m0, y), inverse_moment(m1, y)
        val = (1 - t) * logit(xa) + t * logit(xb) - target
        slope = (1 - t) / (xa * (1 - xa) * m0.density(xa)) + t / (xb * (1 - xb) * m1.density(xb))
        return val, slope

    start = (1 - t) * m0.moment(x) + t * m1.moment(x)
    y = _safeguarded_newton(g, np.zeros_like(x), np.ones_like(x), start)
    xa, xi_a, u2a, ua = _legendre_pieces(m0, y)
    xb, xi_b, u2b, ub = _legendre_pieces(m1, y)
    u2 = (1 - t) * u2a + t * u2b
    psi = -((1 - t) * (np.log1p(-xa) - m0.phi(xa)) + t * (np.log1p(-xb) - m1.phi(xb)))
    phi_abs = psi + np.log1p(-x)
    w = x * (1 - x)
    return GeodesicSlice(
        t=float(t),
        x=x,
        y=y,
        phi=phi_abs - m0.phi(x),
        phi_abs=phi_abs,
        dphi_abs=(y - x) / w,
        density=1.0 / (u2 * w),
        phidot=ua - ub,
        phiddot=(xi_b - xi_a) ** 2 / u2,
    )


def geodesic_equation_residual(m0: InvariantMetricP1, m1: InvariantMetricP1, x, t: float,
                               h: float = 1e-3) -> float:
    """Max of ``|phi_tt rho - w (d_x phi_t)^2|`` by centred differences in ``t`` and ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    s = [metric_geodesic(m0, m1, x, t + d * h).phi_abs for d in (-1, 0, 1)]
    phiddot = (s[2] - 2 * s[1] + s[0]) / h**2
    hx = 1e-4
    dplus = (metric_geodesic(m0, m1, x + hx, t + h).phi_abs - metric_geodesic(m0, m1, x + hx, t - h).phi_abs) / (2 * h)
    dminus = (metric_geodesic(m0, m1, x - hx, t + h).phi_abs - metric_geodesic(m0, m1, x - hx, t - h).phi_abs) / (2 * h)
    dx_phidot = (dplus - dminus) / (2 * hx)
    rho = metric_geodesic(m0, m1, x, t).density
    return float(np.max(np.abs(phiddot * rho - x * (1 - x) * dx_phidot**2)))


# ---------------------------------------------------------------- Bergman side

RAY_NODES = 512  # Gauss nodes for slice integrals; rays concentrate near the poles


def segment_weights(h0: InvariantMetricP1, h1: InvariantMetricP1, k: int):
    """``lam_alpha = (1/2) log(||s_alpha||^2_0 / ||s_alpha||^2_1)`` and ``C = max |lam| / k``."""
    n0, n1 = section_norms(h0, k), section_norms(h1, k)
    lam = 0.5 * (n0.log_norms - n1.log_norms)
    return lam, float(np.max(np.abs(lam)) / k)


def _check_unit_interval(poly: Polytope) -> None:
    if poly.dimension != 1 or not np.array_equal(lattice_points(poly, 1).ravel(), [0, 1]):
        raise ValidationError("rays on P^1 need the unit interval [0, 1] as polytope")


def ray_weights(f: PLConvexFunction, poly: Polytope, k: int):
    """Traceless weights ``k f(alpha/k) - mean`` and ``C = max |lam| / k``."""
    _check_unit_interval(poly)
    lam = weights_from_pl(poly, f, k).traceless
    return lam, float(np.max(np.abs(lam)) / k)


@dataclass(frozen=True)
class BergmanPath:
    """``phi_k(x, t) = (1/k) log sum exp(2 lam t) |s|^2 h0^k / ||s||_0^2 - log(k) / k``.

    Potentials are relative to the start metric ``h0``.
    """

    start: InvariantMetricP1
    k: int
    lam: np.ndarray
    log_norms: np.ndarray = field(repr=False)

    @classmethod
    def from_weights(cls, start: InvariantMetricP1, k: int, lam) -> "BergmanPath":
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (k + 1,):
            raise ValidationError(f"expected {k + 1} weights, got {lam.shape}")
        return cls(start, int(k), lam, section_norms(start, k).log_norms)

    def slice_point(self, t: float) -> BergmanPotential:
        """The path metric at time ``t`` as a point of the Bergman slice."""
        lam = 2 * self.lam * t - self.log_norms - log_binomial(self.k) - np.log(self.k)
        return BergmanPotential(self.k, lam, RAY_NODES)

    def phi_abs(self, x, t: float) -> np.ndarray:
        return self.slice_point(t).phi(x)

    def phi(self, x, t: float) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.phi_abs(x, t) - self.start.phi(x)

    def grid(self, x, times) -> np.ndarray:
        return np.array([self.phi(x, t) for t in times])

    def energy_slope(self, t: float) -> float:
        """``int phi_dot rho dx = (2/k) sum lam_alpha M_alpha(t)`` in closed form."""
        return float(2.0 / self.k * self.lam @ self.slice_point(t).m_diagonal())

    def mass_density(self, t: float, n_nodes: int = RAY_NODES) -> float:
        """``int (phi_ddot rho - w phi_dot'^2) dx`` in closed form on the slice.

        With ``q`` the section distribution at ``(x, t)`` the integrand is
        ``4 (Var(lam) Var(alpha) - Cov(lam, alpha)^2) / (k^2 w)``, which is
        non-negative by Cauchy-Schwarz.
        """
        x, w = _gauss(n_nodes)
        q = self.slice_point(t).distribution(x)
        alpha = np.arange(self.k + 1)
        da = alpha[None, :] - (q @ alpha)[:, None]
        dl = self.lam[None, :] - (q @ self.lam)[:, None]
        var_a = np.sum(q * da**2, axis=1)
        var_l = np.sum(q * dl**2, axis=1)
        cov = np.sum(q * da * dl, axis=1)
        integrand = 4 * (var_l * var_a - cov**2) / (self.k**2 * x * (1 - x))
        return float(w @ integrand)

    def absolute(self):
        """Callable ``(x, t) -> phi_abs`` for :func:`mass_identity_check`."""
        return lambda x, t: self.phi_abs(x, t)


def ray_path(start: InvariantMetricP1, k: int, lam) -> BergmanPath:
    """Bergman ray of the weights ``lam``.

    A ray is parametrised by ``t = -log|w|`` on the punctured disc, so the
    factor ``|w|^(2 lam)`` becomes ``exp(-2 lam t)``.  For convex ``f`` this
    pairs the symplectic potential with ``u + 2 t f``, which stays convex.
    """
    return BergmanPath.from_weights(start, k, -np.asarray(lam, dtype=float))


def uniform_grid(m: int) -> np.ndarray:
    """Cell midpoints ``(j + 1/2) / m``."""
    return (np.arange(m) + 0.5) / m


@dataclass(frozen=True)
class GeodesicSpec:
    kind: str
    start: InvariantMetricP1
    end: InvariantMetricP1 | None = None
    pl: PLConvexFunction | None = None
    polytope: Polytope | None = None
    k_list: tuple = (4, 8, 16, 32)
    grid: int = 256
    tsteps: int = 64
    horizon: float = 1.0

    def __post_init__(self):
        if self.kind not in ("segment", "ray"):
            raise ValidationError(f"unknown geodesic kind {self.kind!r}")
        if self.kind == "segment" and self.end is None:
            raise ValidationError("segment needs an end metric")
        if self.kind == "ray" and (self.pl is None or self.polytope is None):
            raise ValidationError("ray needs a PL function and its polytope")
        if self.grid < 2 or self.tsteps < 2 or self.horizon <= 0:
            raise ValidationError("grid and tsteps must be at least 2 and the horizon positive")


def _fit_log_rate(ks, errors) -> float:
    """Exponent ``p`` in ``error ~ C (log k / k)^p``."""
    ks = np.asarray(ks, dtype=float)
    return float(np.polyfit(np.log(np.log(ks) / ks), np.log(errors), 1)[0])


def _segment_errors(start, end, ks, x, times, exact):
    rows = []
    for k in ks:
        lam, c = segment_weights(start, end, k)
        path = BergmanPath.from_weights(start, k, lam)
        vals = path.grid(x, times)
        second = vals[2:] - 2 * vals[1:-1] + vals[:-2]
        err = np.abs(vals - exact)
        rho_end = np.exp(logsumexp_rows(path, x))
        rows.append({
            "k": k,
            "C": c,
            "sup_error": float(err.max()),
            "t0_error": float(err[0].max()),
            "t0_bound": float(np.max(np.abs(np.log(rho_end / k))) / k),
            "min_second_difference": float(second.min()) if len(second) else 0.0,
        })
    return rows


def logsumexp_rows(path: BergmanPath, x) -> np.ndarray:
    """``log rho_k(x)`` of the start metric (the ``t = 0`` face before the offset)."""
    return path.phi_abs(x, 0.0) * path.k - path.k * path.start.phi(x) + np.log(path.k)


def bergman_vs_exact(spec: GeodesicSpec, reverse: bool = True) -> dict:
    """Sup-distance between Bergman and exact geodesic segments on the (x, t) grid."""
    if spec.kind != "segment":
        raise ValidationError("bergman_vs_exact compares segments")
    ks = sorted(int(k) for k in spec.k_list)
    x = uniform_grid(spec.grid)
    times = np.linspace(0.0, 1.0, spec.tsteps + 1)
    exact = np.array([metric_geodesic(spec.start, spec.end, x, t).phi for t in times])
    rows = _segment_errors(spec.start, spec.end, ks, x, times, exact)
    errs = [r["sup_error"] for r in rows]
    report = {
        "kind": "segment",
        "k_list": ks,
        "grid": spec.grid,
        "tsteps": spec.tsteps,
        "rows": rows,
        "errors": errs,
        "strictly_decreasing": bool(np.all(np.diff(errs) < 0)),
        "rate_exponent": _fit_log_rate(ks, errs) if len(ks) >= 2 else None,
        "min_second_difference": min(r["min_second_difference"] for r in rows),
    }
    if reverse:
        back = np.array([metric_geodesic(spec.end, spec.start, x, t).phi for t in times])
        rev = _segment_errors(spec.end, spec.start, ks, x, times, back)
        rerr = [r["sup_error"] for r in rev]
        ratio = np.array(errs) / np.array(rerr)
        report["reverse_errors"] = rerr
        report["reverse_ratio_max"] = float(max(ratio.max(), (1 / ratio).max()))
    return report


def translate_ray(start: InvariantMetricP1, slope: float, x, t: float) -> np.ndarray:
    """Ray of the torus flow: ``psi(xi + 2 a t) - psi(xi) - a t`` for the affine weight slope ``a``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xi = logit(x) + 2 * slope * t
    moved = 1.0 / (1.0 + np.exp(-xi))
    psi_moved = np.logaddexp(0.0, xi) + start.phi(moved)
    psi = -np.log1p(-x) + start.phi(x)
    return psi_moved - psi - slope * t


# ---------------------------------------------------------------- mass identity


def _metric_snapshots(path, times, degree: int):
    return [InvariantMetricP1.from_function(lambda x, t=t: path(x, t), degree, validate=True) for t in times]


def mass_identity_check(path, t0: float, t1: float, n_steps: int = 64, degree: int = 32) -> dict:
    """Both sides of ``d/dt int phi_dot rho = int (phi_ddot rho - w phi_dot'^2)``.

    ``path(x, t)`` is the potential relative to Fubini-Study.  Time
    derivatives use the path's own grid: centred differences inside,
    second-order one-sided formulas at the ends.

    Returns
    -------
    dict
        ``lhs = int_{t0}^{t1} int (phi_ddot rho - w phi_dot'^2) dx dt`` (Simpson
        in ``t``), ``rhs = int phi_dot rho dx`` at ``t1`` minus at ``t0`` and
        ``gap = |lhs - rhs|``.
    """
    if n_steps < 4 or t1 <= t0:
        raise ValidationError("need t1 > t0 and at least 4 time steps")
    times = np.linspace(t0, t1, n_steps + 1)
    h = times[1] - times[0]
    metrics = _metric_snapshots(path, times, degree)
    kern = metrics[0].kernel
    coeffs = np.array([m.coeffs for m in metrics])
    vel = np.gradient(coeffs, h, axis=0, edge_order=2)
    acc = np.empty_like(coeffs)
    acc[1:-1] = (coeffs[2:] - 2 * coeffs[1:-1] + coeffs[:-2]) / h**2
    acc[0] = (2 * coeffs[0] - 5 * coeffs[1] + 4 * coeffs[2] - coeffs[3]) / h**2
    acc[-1] = (2 * coeffs[-1] - 5 * coeffs[-2] + 4 * coeffs[-3] - coeffs[-4]) / h**2
    integrand, slopes = [], []
    for m, v, a in zip(metrics, vel, acc):
        rho = m.density()
        integrand.append(kern.integrate(kern.evaluate(a) * rho - kern.w_nodes * kern.evaluate(v, derivative=1) ** 2))
        slopes.append(kern.integrate(kern.evaluate(v) * rho))
    lhs = float(simpson(integrand, x=times))
    rhs = float(slopes[-1] - slopes[0])
    return {
        "t0": t0,
        "t1": t1,
        "n_steps": n_steps,
        "lhs": lhs,
        "rhs": rhs,
        "gap": abs(lhs - rhs),
        "energy_slopes": (float(slopes[0]), float(slopes[-1])),
    }


def geodesic_path(m0: InvariantMetricP1, m1: InvariantMetricP1):
    """Callable ``(x, t) -> phi_abs`` of the exact geodesic."""
    return lambda x, t: metric_geodesic(m0, m1, x, t).phi_abs


def ray_report(spec: GeodesicSpec, mass_steps: int = 128) -> dict:
    """Bergman rays for a PL test configuration over ``[0, horizon]``.

    Per ``k``: the weight bound ``C``; the mass of the ray as a double
    integral of :meth:`BergmanPath.mass_density` (Simpson in ``t``) against
    the change of the closed-form energy slope; the energy slope at the
    horizon and at half of it; for affine functions the distance to the
    torus-flow ray.
    """
    if spec.kind != "ray":
        raise ValidationError("ray_report needs a ray spec")
    ks = sorted(int(k) for k in spec.k_list)
    x = uniform_grid(spec.grid)
    times = np.linspace(0.0, spec.horizon, spec.tsteps + 1)
    mass_t = np.linspace(0.0, spec.horizon, mass_steps + 1)
    affine = len(spec.pl.pieces) == 1
    rows = []
    for k in ks:
        lam, c = ray_weights(spec.pl, spec.polytope, k)
        path = ray_path(spec.start, k, lam)
        lhs = float(simpson([path.mass_density(t) for t in mass_t], x=mass_t))
        slope_0 = path.energy_slope(0.0)
        slope_t = path.energy_slope(spec.horizon)
        slope_half = path.energy_slope(spec.horizon / 2)
        row = {
            "k": k,
            "C": c,
            "mass_lhs": lhs,
            "mass_rhs": slope_t - slope_0,
            "mass_gap": abs(lhs - (slope_t - slope_0)),
            "energy_slope_T": slope_t,
            "energy_slope_half_T": slope_half,
            # c + d / T through the two horizons
            "energy_slope_extrapolated": 2 * slope_t - slope_half,
        }
        vals = path.grid(x, times)
        second = vals[2:] - 2 * vals[1:-1] + vals[:-2]
        row["min_second_difference"] = float(second.min())
        if affine:
            slope = float(spec.pl.pieces[0][0][0])
            oracle = np.array([translate_ray(spec.start, -slope, x, t) for t in times])
            row["translate_error"] = float(np.abs(vals - oracle).max())
        rows.append(row)
    cs = np.array([r["C"] for r in rows])
    masses = np.array([abs(r["mass_rhs"]) for r in rows])
    positive = masses > 1e-14
    exponent = None
    if positive.sum() >= 2:
        exponent = float(-np.polyfit(np.log(np.array(ks)[positive]), np.log(masses[positive]), 1)[0])
    return {
        "kind": "ray",
        "k_list": ks,
        "horizon": spec.horizon,
        "rows": rows,
        "C_spread": float(cs.max() / cs.min() - 1) if cs.min() > 0 else 0.0,
        "mass_exponent": exponent,
    }
