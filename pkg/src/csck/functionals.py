"""Energy functionals I, J, F0, F and the K-energy on invariant metrics of P^1.

Every functional takes a background metric ``b`` and a potential ``psi``
relative to it (Legendre coefficients on the background's kernel, or a
metric whose coefficients are used).  The metric ``b + psi`` must be
positive.  With ``V = 1`` the average scalar curvature is ``MU = 2``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import NonPositiveMetric, ValidationError
from .p1metric import MU, InvariantMetricP1, bump_family


def _coeffs(background: InvariantMetricP1, psi) -> np.ndarray:
    c = psi.coeffs if isinstance(psi, InvariantMetricP1) else np.asarray(psi, dtype=float)
    if c.shape != background.coeffs.shape:
        raise ValidationError(f"potential has {c.shape[0]} coefficients, background has {background.coeffs.shape[0]}")
    return c


def _shifted(background: InvariantMetricP1, psi: np.ndarray) -> InvariantMetricP1:
    m = background.with_coeffs(background.coeffs + psi)
    if m.density().min() <= 0:
        raise NonPositiveMetric("background plus potential is not a positive metric")
    return m


def eval_I_J(background: InvariantMetricP1, psi):
    """``I = int psi (rho_b - rho_{b+psi})`` and ``J = I / 2`` (complex dimension one)."""
    psi = _coeffs(background, psi)
    _shifted(background, psi)
    k = background.kernel
    i_val = -k.inner(psi, k.laplacian(psi))
    return i_val, i_val / 2


def eval_F0(background: InvariantMetricP1, psi) -> float:
    """``J - int psi rho_b``."""
    psi = _coeffs(background, psi)
    _, j_val = eval_I_J(background, psi)
    return j_val - background.kernel.inner(psi, background.density_coeffs)


def eval_F0_alternative(background: InvariantMetricP1, psi) -> float:
    """``-[(I - J) + int psi rho_{b+psi}]``, equal to :func:`eval_F0`."""
    psi = _coeffs(background, psi)
    i_val, j_val = eval_I_J(background, psi)
    shifted = _shifted(background, psi)
    return -((i_val - j_val) + background.kernel.inner(psi, shifted.density_coeffs))


def eval_F(background: InvariantMetricP1, psi, mu: float = MU) -> float:
    """``F0 - (1/mu) log int exp(f_b - mu psi) rho_b`` with ``f_b`` the normalised Ricci potential."""
    psi = _coeffs(background, psi)
    k = background.kernel
    f_b = k.evaluate(background.ricci_potential_coeffs())
    integrand = np.exp(f_b - mu * k.evaluate(psi)) * background.density()
    return eval_F0(background, psi) - np.log(k.integrate(integrand)) / mu


def eval_K(background: InvariantMetricP1, psi, mu: float = MU) -> float:
    """K-energy in closed form for complex dimension one.

    ``int rho log(rho / rho_b) - int psi r_b + (mu / 2) int psi (rho_b + rho)``
    with ``rho`` the density of ``b + psi`` and ``r_b`` the background Ricci density.
    """
    psi = _coeffs(background, psi)
    k = background.kernel
    shifted = _shifted(background, psi)
    rho, rho_b = shifted.density(), background.density()
    entropy = k.integrate(rho * np.log(rho / rho_b))
    linear = -k.inner(psi, background.ricci_coeffs())
    quad = 0.5 * mu * (k.inner(psi, background.density_coeffs) + k.inner(psi, shifted.density_coeffs))
    return entropy + linear + quad


def k_energy_path_integral(background: InvariantMetricP1, psi, n_time: int = 24, mu: float = MU) -> float:
    """``-int_0^1 int psi (r_t - mu rho_t) dt`` along ``b + t psi`` (Gauss in t)."""
    psi = _coeffs(background, psi)
    k = background.kernel
    s, wts = np.polynomial.legendre.leggauss(n_time)
    total = 0.0
    for t, wt in zip((s + 1) / 2, wts / 2):
        m = _shifted(background, t * psi)
        total += wt * k.inner(psi, m.ricci_coeffs() - mu * m.density_coeffs)
    return -total


@dataclass(frozen=True)
class FunctionalReport:
    I: float
    J: float
    F0: float
    F: float
    K: float

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate_all(background: InvariantMetricP1, psi) -> FunctionalReport:
    i_val, j_val = eval_I_J(background, psi)
    return FunctionalReport(
        i_val, j_val, eval_F0(background, psi), eval_F(background, psi), eval_K(background, psi)
    )


def directional_derivative(func, background: InvariantMetricP1, psi, direction, step: float = 1e-5) -> float:
    """Central difference of ``func(b, psi + s direction)`` at ``s = 0``."""
    psi = _coeffs(background, psi)
    direction = _coeffs(background, direction)
    return (func(background, psi + step * direction) - func(background, psi - step * direction)) / (2 * step)


def variation(name: str, background: InvariantMetricP1, psi, direction, mu: float = MU) -> float:
    """Analytic first variation of I, J, F0, F or K in ``direction``."""
    psi = _coeffs(background, psi)
    eta = _coeffs(background, direction)
    k = background.kernel
    shifted = _shifted(background, psi)
    if name == "F0":
        return -k.inner(eta, shifted.density_coeffs)
    if name == "J":
        return -k.inner(eta, k.laplacian(psi))
    if name == "I":
        return -2 * k.inner(eta, k.laplacian(psi))
    if name == "K":
        return -k.inner(eta, shifted.ricci_coeffs() - mu * shifted.density_coeffs)
    if name == "F":
        f_b = k.evaluate(background.ricci_potential_coeffs())
        weight = np.exp(f_b - mu * k.evaluate(psi)) * background.density()
        eta_vals = k.evaluate(eta)
        return -k.inner(eta, shifted.density_coeffs) + k.integrate(eta_vals * weight) / k.integrate(weight)
    raise ValidationError(f"unknown functional {name!r}")


def random_potential(seed: int, background: InvariantMetricP1, amplitude: float = 0.08) -> np.ndarray:
    """Seeded bump potential ``psi`` with ``background + psi`` positive."""
    for attempt in range(100):
        cand = bump_family(seed * 1000 + attempt, background.kernel.degree, amplitude=amplitude)
        m = background.with_coeffs(background.coeffs + cand.coeffs)
        if m.min_density > 0.05:
            return cand.coeffs
    raise NonPositiveMetric("could not sample a potential keeping the metric positive")
