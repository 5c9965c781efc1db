"""S^1-invariant Kahler metrics on P^1 in the background moment coordinate.

The background is Fubini-Study scaled to total volume 1.  Its moment
coordinate ``x0`` runs over [0, 1]; with ``w = x0 (1 - x0)`` the log
coordinate is ``xi = log(x0 / (1 - x0))`` and the FS potential is
``psi_fs = -log(1 - x0)``.

A relative potential ``phi(x0)`` gives the metric with density
``rho = 1 + (w phi')'`` against ``dx0`` and moment map ``x = x0 + w phi'``.
Potentials are stored as shifted-Legendre expansions: the operator
``D v = (w v')'`` is then diagonal with eigenvalues ``-n (n + 1)``, so
discrete integrations by parts hold to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as leg

from .errors import NonPositiveMetric, ValidationError

MU = 2.0  # average scalar curvature for V = 1 on P^1


class LegendreKernel:
    """Spectral discretisation on [0, 1] with ``degree + 1`` shifted Legendre modes.

    Gauss-Legendre nodes (``n_nodes`` of them, default ``2 degree + 2``)
    carry all pointwise nonlinearities.  Weights sum to 1.
    """

    def __init__(self, degree: int, n_nodes: int | None = None):
        if degree < 2:
            raise ValidationError("degree must be at least 2")
        self.degree = int(degree)
        self.n_nodes = int(n_nodes or 2 * degree + 2)
        s, wts = leg.leggauss(self.n_nodes)
        self.nodes = (s + 1) / 2
        self.weights = wts / 2
        self.modes = np.arange(self.degree + 1)
        self.eigenvalues = -(self.modes * (self.modes + 1)).astype(float)
        self.norms = 1.0 / (2 * self.modes + 1)  # int_0^1 P_n^2
        self.vander = self.vandermonde(self.nodes)
        ident = np.eye(self.degree + 1)
        # d/dx0 = 2 d/ds for s = 2 x0 - 1
        self.diff = np.zeros((self.degree + 1, self.degree + 1))
        self.diff[:-1] = 2 * leg.legder(ident)
        self.w_nodes = self.nodes * (1 - self.nodes)

    def vandermonde(self, x) -> np.ndarray:
        return leg.legvander(2 * np.asarray(x, dtype=float) - 1, self.degree)

    # coefficient-space operations
    def evaluate(self, coeffs, x=None, derivative: int = 0) -> np.ndarray:
        c = np.asarray(coeffs, dtype=float)
        for _ in range(derivative):
            c = self.diff @ c
        if x is None:
            return self.vander @ c
        return leg.legval(2 * np.asarray(x, dtype=float) - 1, c)

    def project(self, values) -> np.ndarray:
        """Discrete L^2 projection of node values onto the polynomial space."""
        return (2 * self.modes + 1) * (self.vander.T @ (self.weights * np.asarray(values, dtype=float)))

    def laplacian(self, coeffs) -> np.ndarray:
        """Coefficients of ``(w v')'``."""
        return self.eigenvalues * np.asarray(coeffs, dtype=float)

    def integrate(self, values) -> float:
        return float(self.weights @ np.asarray(values, dtype=float))

    def mean(self, coeffs) -> float:
        return float(np.asarray(coeffs)[0])

    def inner(self, c1, c2) -> float:
        """``int_0^1 p q dx0`` for polynomials given by coefficients."""
        return float(np.sum(np.asarray(c1) * np.asarray(c2) * self.norms))

    def dirichlet(self, c1, c2=None) -> float:
        """``int_0^1 w p' q' dx0``."""
        c2 = c1 if c2 is None else c2
        return float(np.sum(np.asarray(c1) * np.asarray(c2) * -self.eigenvalues * self.norms))

    def constant(self, value: float = 1.0) -> np.ndarray:
        c = np.zeros(self.degree + 1)
        c[0] = value
        return c

    def weighted_projection(self, values, weight_values) -> np.ndarray:
        """Projection orthogonal for the inner product ``sum W rho p q``."""
        wv = self.weights * np.asarray(weight_values, dtype=float)
        gram = self.vander.T @ (wv[:, None] * self.vander)
        rhs = self.vander.T @ (wv * np.asarray(values, dtype=float))
        return np.linalg.solve(gram, rhs)

    def check_grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, 4 * self.degree + 9)


@lru_cache(maxsize=32)
def legendre_kernel(degree: int = 32, n_nodes: int | None = None) -> LegendreKernel:
    return LegendreKernel(degree, n_nodes)


def fs_potential(x0):
    """``psi_fs = -log(1 - x0)`` as a function of the moment coordinate."""
    return -np.log1p(-np.asarray(x0, dtype=float))


def logit(x0):
    x0 = np.asarray(x0, dtype=float)
    return np.log(x0) - np.log1p(-x0)


def expit(xi):
    xi = np.asarray(xi, dtype=float)
    return np.where(xi >= 0, 1 / (1 + np.exp(-np.abs(xi))), np.exp(-np.abs(xi)) / (1 + np.exp(-np.abs(xi))))


@dataclass(eq=False)
class InvariantMetricP1:
    """Metric ``omega_fs + (i/2) ddbar phi`` with ``phi`` a Legendre expansion.

    Attributes
    ----------
    coeffs : ndarray
        Shifted-Legendre coefficients of the FS-relative potential.
    kernel : LegendreKernel
    """

    coeffs: np.ndarray
    kernel: LegendreKernel

    def __post_init__(self):
        self.coeffs = np.array(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.kernel.degree + 1,):
            raise ValidationError(f"expected {self.kernel.degree + 1} coefficients, got {self.coeffs.shape}")

    # constructors
    @classmethod
    def fubini_study(cls, degree: int = 32) -> "InvariantMetricP1":
        k = legendre_kernel(degree)
        return cls(np.zeros(degree + 1), k)

    @classmethod
    def from_function(cls, func, degree: int = 32, validate: bool = True) -> "InvariantMetricP1":
        k = legendre_kernel(degree)
        m = cls(k.project(func(k.nodes)), k)
        if validate:
            m.validate()
        return m

    @classmethod
    def from_grid(cls, values, degree: int | None = None, validate: bool = True) -> "InvariantMetricP1":
        """Least-squares Legendre fit to values on the uniform grid ``j / m``."""
        values = np.asarray(values, dtype=float)
        m = len(values) - 1
        if m < 4:
            raise ValidationError("grid needs at least 5 values")
        if degree is None:
            degree = int(min(32, max(4, round(2 * np.sqrt(m)))))
        degree = min(degree, m)
        k = legendre_kernel(degree)
        x = np.linspace(0, 1, m + 1)
        coeffs, *_ = np.linalg.lstsq(k.vandermonde(x), values, rcond=None)
        metric = cls(coeffs, k)
        if validate:
            metric.validate()
        return metric

    def with_coeffs(self, coeffs) -> "InvariantMetricP1":
        return InvariantMetricP1(coeffs, self.kernel)

    def resampled(self, degree: int) -> "InvariantMetricP1":
        c = np.zeros(degree + 1)
        n = min(degree, self.kernel.degree) + 1
        c[:n] = self.coeffs[:n]
        return InvariantMetricP1(c, legendre_kernel(degree))

    def __add__(self, other: "InvariantMetricP1") -> "InvariantMetricP1":
        return self.with_coeffs(self.coeffs + other.coeffs)

    # pointwise quantities (vectorised over x0)
    def phi(self, x=None):
        return self.kernel.evaluate(self.coeffs, x)

    def dphi(self, x=None):
        return self.kernel.evaluate(self.coeffs, x, 1)

    @property
    def density_coeffs(self) -> np.ndarray:
        return self.kernel.constant() + self.kernel.laplacian(self.coeffs)

    def density(self, x=None):
        return self.kernel.evaluate(self.density_coeffs, x)

    def moment(self, x=None):
        x = self.kernel.nodes if x is None else np.asarray(x, dtype=float)
        return x + x * (1 - x) * self.dphi(x)

    def validate(self) -> "InvariantMetricP1":
        grid = self.kernel.check_grid()
        rho = np.concatenate([self.density(), self.density(grid)])
        if not np.all(np.isfinite(rho)) or rho.min() <= 0:
            where = np.concatenate([self.kernel.nodes, grid])[np.argmin(rho)]
            raise NonPositiveMetric(f"metric density {rho.min():.3e} <= 0 near x0 = {where:.4f}")
        return self

    @property
    def min_density(self) -> float:
        return float(min(self.density().min(), self.density(self.kernel.check_grid()).min()))

    def log_density_coeffs(self) -> np.ndarray:
        rho = self.density()
        if rho.min() <= 0:
            raise NonPositiveMetric("metric density is not positive at quadrature nodes")
        return self.kernel.project(np.log(rho))

    def ricci_coeffs(self) -> np.ndarray:
        """Ricci density ``r = 2 - D log rho`` (log rho projected)."""
        return 2 * self.kernel.constant() - self.kernel.laplacian(self.log_density_coeffs())

    def scalar_curvature(self, x=None):
        return self.kernel.evaluate(self.ricci_coeffs(), x) / self.density(x)

    def ricci_potential_coeffs(self) -> np.ndarray:
        """Ricci potential ``f`` with ``r - MU rho = D f`` and ``int e^f rho = 1``."""
        f = -self.log_density_coeffs() - MU * self.coeffs
        vals = self.kernel.evaluate(f)
        norm = self.kernel.integrate(np.exp(vals) * self.density())
        f[0] -= np.log(norm)
        return f

    def volume(self) -> float:
        return self.kernel.integrate(self.density())

    def kahler_potential(self, x=None):
        """Full potential ``psi_fs + phi`` at moment coordinates ``x``."""
        x = self.kernel.nodes if x is None else np.asarray(x, dtype=float)
        return fs_potential(x) + self.phi(x)

    def to_json(self, grid_size: int = 256) -> dict:
        x = np.linspace(0, 1, grid_size + 1)
        return {
            "kind": "p1-invariant",
            "m": grid_size,
            "grid": [float(v) for v in self.phi(x)],
            "legendre": [float(v) for v in self.coeffs],
        }


def metric_from_json(data: dict) -> InvariantMetricP1:
    if not isinstance(data, dict) or data.get("kind") != "p1-invariant":
        raise ValidationError("metric JSON must have kind 'p1-invariant'")
    if "legendre" in data:
        coeffs = np.asarray(data["legendre"], dtype=float)
        return InvariantMetricP1(coeffs, legendre_kernel(len(coeffs) - 1)).validate()
    grid = data.get("grid")
    if not isinstance(grid, list):
        raise ValidationError("metric JSON needs a 'grid' list")
    if "m" in data and int(data["m"]) != len(grid) - 1:
        raise ValidationError(f"grid has {len(grid)} values but m = {data['m']}")
    return InvariantMetricP1.from_grid(grid)


@dataclass(frozen=True)
class MetricData:
    """Node values of the geometric quantities of one metric."""

    nodes: np.ndarray
    weights: np.ndarray
    density: np.ndarray
    volume_element: np.ndarray
    scalar_curvature: np.ndarray
    ricci_density: np.ndarray

    def laplacian(self, kernel: LegendreKernel, coeffs) -> np.ndarray:
        """Metric Laplacian ``D f / rho`` of a polynomial at the nodes."""
        return kernel.evaluate(kernel.laplacian(coeffs)) / self.density

    def gradient_norm(self, kernel: LegendreKernel, coeffs) -> np.ndarray:
        """``|grad f|^2 = w f'^2 / rho`` at the nodes."""
        return self.nodes * (1 - self.nodes) * kernel.evaluate(coeffs, None, 1) ** 2 / self.density


def metric_kernel(metric: InvariantMetricP1) -> MetricData:
    k = metric.kernel
    rho = metric.density()
    if rho.min() <= 0:
        raise NonPositiveMetric("metric density is not positive at quadrature nodes")
    r = k.evaluate(metric.ricci_coeffs())
    return MetricData(k.nodes, k.weights, rho, k.weights * rho, r / rho, r)


def bump_family(seed: int, degree: int = 24, n_bumps: int = 4, amplitude: float = 0.08,
                max_tries: int = 200) -> InvariantMetricP1:
    """Seeded random potential: a sum of Gaussian bumps, rejected until the metric is positive."""
    rng = np.random.default_rng(seed)
    k = legendre_kernel(degree)
    for _ in range(max_tries):
        centers = rng.uniform(0.1, 0.9, n_bumps)
        widths = rng.uniform(0.2, 0.4, n_bumps)
        amps = rng.normal(0.0, amplitude, n_bumps)

        def func(x):
            return sum(a * np.exp(-(((x - c) / s) ** 2)) for a, c, s in zip(amps, centers, widths))

        metric = InvariantMetricP1(k.project(func(k.nodes)), k)
        if metric.min_density > 0.3:
            return metric
    raise NonPositiveMetric("bump sampler failed to produce a positive metric")
