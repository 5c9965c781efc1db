"""Bergman geometry of invariant metrics on P^1.

Sections of ``O(k)`` are the monomials ``s_alpha``, ``0 <= alpha <= k``.  In
the background moment coordinate ``x`` on ``[0, 1]`` the pointwise norm is
``|s_alpha|^2 h^k = x^alpha (1 - x)^(k - alpha) exp(-k phi)`` and the volume
form is ``rho dx`` with total mass one.  All sums over sections are done in
log space so that large ``k`` does not underflow.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

from .errors import InsufficientData, NoConvergence, QuadratureOverflow, ValidationError
from .p1metric import InvariantMetricP1

MAX_K = 256


@lru_cache(maxsize=32)
def _gauss(n: int):
    s, w = np.polynomial.legendre.leggauss(n)
    return (s + 1) / 2, w / 2


def _rule(k: int, degree: int):
    # exact for the monomial factor; the smooth factor exp(-k phi) rho needs headroom
    return _gauss(max(96, 2 * k + 4 * degree + 64))


def _check_k(k: int, max_k: int = MAX_K) -> int:
    k = int(k)
    if k < 1:
        raise ValidationError("k must be a positive integer")
    if k > max_k:
        raise QuadratureOverflow(f"k = {k} exceeds the configured maximum {max_k}")
    return k


def log_monomials(k: int, x) -> np.ndarray:
    """``log(x^alpha (1-x)^(k-alpha))`` with shape ``(len(x), k+1)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))[:, None]
    alpha = np.arange(k + 1)[None, :]
    with np.errstate(divide="ignore"):
        return xlogy(alpha, x) + xlogy(k - alpha, 1 - x)


def log_binomial(k: int) -> np.ndarray:
    alpha = np.arange(k + 1)
    return gammaln(k + 1) - gammaln(alpha + 1) - gammaln(k - alpha + 1)


@dataclass(frozen=True)
class BergmanData:
    """``L^2`` norms ``||s_alpha||^2`` of the monomial sections of ``O(k)``."""

    k: int
    log_norms: np.ndarray
    metric: InvariantMetricP1 = field(repr=False, compare=False)

    @property
    def norms(self) -> np.ndarray:
        return np.exp(self.log_norms)

    def to_json(self) -> dict:
        return {"k": self.k, "norms": self.norms.tolist(), "log_norms": self.log_norms.tolist()}


def section_norms(metric: InvariantMetricP1, k: int, max_k: int = MAX_K) -> BergmanData:
    """``||s_alpha||^2 = int x^alpha (1-x)^(k-alpha) exp(-k phi) rho dx`` by Gauss-Legendre.

    For Fubini-Study (``phi = 0``) these are Beta values ``B(alpha+1, k-alpha+1)``.
    """
    k = _check_k(k, max_k)
    metric.validate()
    x, w = _rule(k, metric.kernel.degree)
    log_f = np.log(w) + np.log(metric.density(x)) - k * metric.phi(x)
    log_norms = logsumexp(log_monomials(k, x) + log_f[:, None], axis=0)
    if not np.all(np.isfinite(log_norms)):
        raise QuadratureOverflow("section norms are not finite")
    return BergmanData(k, log_norms, metric)


def _log_terms(data: BergmanData, x) -> np.ndarray:
    """``log(|s_alpha|^2 h^k / ||s_alpha||^2)`` at ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return log_monomials(data.k, x) - data.k * data.metric.phi(x)[:, None] - data.log_norms


def density_of_states(metric: InvariantMetricP1, k: int, x, data: BergmanData | None = None):
    """``rho_k(x) = sum_alpha |s_alpha|^2 h^k / ||s_alpha||^2``; equals ``k + 1`` for Fubini-Study."""
    data = data if data is not None else section_norms(metric, k)
    scalar = np.ndim(x) == 0
    out = np.exp(logsumexp(_log_terms(data, x), axis=1))
    return float(out[0]) if scalar else out


def integrated_density(metric: InvariantMetricP1, k: int, data: BergmanData | None = None) -> float:
    """``int rho_k rho dx``, which equals ``k + 1``."""
    data = data if data is not None else section_norms(metric, k)
    x, w = _rule(k, metric.kernel.degree)
    return float(np.sum(w * density_of_states(metric, k, x, data) * metric.density(x)))


def default_samples(n: int = 17) -> np.ndarray:
    return np.linspace(0.05, 0.95, n)


def lu_coefficient_check(metric: InvariantMetricP1, k_list, samples=None) -> dict:
    """Fit ``rho_k(x) - k = A1 + A2/k + A3/k^2`` and compare ``A1`` with ``R/2``.

    Also reports ``max_x |rho_k - k - R/2|`` per ``k`` and the slope of its
    log against ``log k`` (expected near ``-1``).  The relative deviation is
    measured against ``max |R/2|`` over the samples so that zeros of ``R``
    do not inflate it.
    """
    ks = sorted({int(k) for k in k_list})
    if len(ks) < 3:
        raise InsufficientData("need at least three distinct k")
    x = default_samples() if samples is None else np.asarray(samples, dtype=float)
    half_r = metric.scalar_curvature(x) / 2
    excess = np.array([density_of_states(metric, k, x) - k for k in ks])
    kk = np.asarray(ks, dtype=float)
    terms = min(3, len(ks))
    design = np.stack([kk ** (-p) for p in range(terms)], axis=1)
    coef, *_ = np.linalg.lstsq(design, excess, rcond=None)
    a1 = coef[0]
    dev = np.abs(a1 - half_r)
    scale = float(np.max(np.abs(half_r)))
    err_k = np.abs(excess - half_r[None, :]).max(axis=1)
    slope = float(np.polyfit(np.log(kk), np.log(np.maximum(err_k, 1e-300)), 1)[0])
    return {
        "k_list": ks,
        "samples": x.tolist(),
        "A1": a1.tolist(),
        "half_R": half_r.tolist(),
        "deviation": dev.tolist(),
        "max_deviation": float(dev.max()),
        "max_relative_deviation": float(dev.max() / scale),
        "error_by_k": err_k.tolist(),
        "error_slope": slope,
    }


def m_matrix(metric: InvariantMetricP1, k: int, data: BergmanData | None = None) -> np.ndarray:
    """Diagonal of ``M_alpha = int (|s_alpha|^2 h^k / ||s_alpha||^2) / rho_k  rho dx``.

    The entries sum to one; Fubini-Study gives ``1/(k+1)`` for every ``alpha``.
    """
    data = data if data is not None else section_norms(metric, k)
    x, w = _rule(k, metric.kernel.degree)
    lt = _log_terms(data, x)
    q = np.exp(lt - logsumexp(lt, axis=1, keepdims=True))
    return (w * metric.density(x)) @ q


def balance_residual(m: np.ndarray) -> float:
    """``||M - (tr M / (N+1)) I||`` for a diagonal ``M``."""
    return float(np.linalg.norm(m - m.mean()))


@dataclass(frozen=True)
class BergmanPotential:
    """Metric on the torus-invariant Bergman slice.

    ``exp(k phi) = sum_alpha exp(lam_alpha) C(k, alpha) x^alpha (1-x)^(k-alpha)``,
    so ``lam = 0`` is Fubini-Study.
    """

    k: int
    lam: np.ndarray
    n_nodes: int = 0  # quadrature size for M and F0; 0 picks a default from k

    def _rule(self):
        return _gauss(self.n_nodes) if self.n_nodes else _rule(self.k, 0)

    def _log_weights(self) -> np.ndarray:
        return self.lam + log_binomial(self.k)

    def distribution(self, x) -> np.ndarray:
        """Probabilities ``q_alpha(x)`` proportional to ``a_alpha x^alpha (1-x)^(k-alpha)``."""
        lt = log_monomials(self.k, x) + self._log_weights()
        return np.exp(lt - logsumexp(lt, axis=1, keepdims=True))

    def phi(self, x) -> np.ndarray:
        return logsumexp(log_monomials(self.k, x) + self._log_weights(), axis=1) / self.k

    def moment_shift(self, x) -> np.ndarray:
        """``w phi' = E_q[alpha] / k - x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.distribution(x) @ np.arange(self.k + 1) / self.k - x

    def density(self, x) -> np.ndarray:
        """``rho = 1 + (w phi')' = Var_q(alpha) / (k w)`` at interior points."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        q = self.distribution(x)
        alpha = np.arange(self.k + 1)
        mean = q @ alpha
        var = np.sum(q * (alpha[None, :] - mean[:, None]) ** 2, axis=1)
        return var / (self.k * x * (1 - x))

    def m_diagonal(self) -> np.ndarray:
        """``M_alpha = int q_alpha rho dx``; constant exactly when balanced."""
        x, w = self._rule()
        return (w * self.density(x)) @ self.distribution(x)

    def neg_f0(self) -> float:
        """``-F0 = int phi dx - (1/2) int (w phi')^2 / w dx`` relative to Fubini-Study."""
        x, w = self._rule()
        shift = self.moment_shift(x)
        return float(w @ self.phi(x) - 0.5 * w @ (shift**2 / (x * (1 - x))))

    def to_metric(self, degree: int = 32) -> InvariantMetricP1:
        return InvariantMetricP1.from_function(self.phi, degree)


def hilbert_point(metric: InvariantMetricP1, k: int) -> BergmanPotential:
    """Slice point with weights ``1 / ||s_alpha||^2``, normalised to ``sum lam = 0``."""
    data = section_norms(metric, k)
    lam = -data.log_norms - log_binomial(k)
    return BergmanPotential(k, lam - lam.mean())


def balance_iterate(metric: InvariantMetricP1, k: int, max_steps: int = 500, tol: float = 1e-8,
                    method: str = "fixed-point", raise_on_failure: bool = True):
    """Minimise ``-F0`` over the determinant-one torus-invariant Bergman slice.

    Starts from the Hilbert point of ``metric``.  ``fixed-point`` proposes
    ``lam <- lam - log((N+1) M)``; ``gradient`` proposes ``lam <- lam - (N+1) (M - mean M)``.
    Both are projected to ``sum lam = 0`` and backtracked until ``-F0``
    does not increase.

    Returns
    -------
    weights : ndarray
        ``exp(lam)`` times the binomial weights of Fubini-Study.
    report : dict
        Per-step residuals and ``-F0`` values, the final ``M`` and ``kappa = tr M / (N+1)``.
    """
    if method not in ("fixed-point", "gradient"):
        raise ValidationError(f"unknown balancing method {method!r}")
    k = _check_k(k)
    point = hilbert_point(metric, k)
    n1 = k + 1
    m = point.m_diagonal()
    energy = point.neg_f0()
    residuals, energies, steps_taken = [balance_residual(m)], [energy], []
    steps = 0
    while residuals[-1] >= tol and steps < max_steps:
        if method == "fixed-point":
            direction = -np.log(n1 * m)
        else:
            direction = -n1 * (m - m.mean())
        direction -= direction.mean()
        step = 1.0
        while True:
            trial = BergmanPotential(k, point.lam + step * direction)
            trial_energy = trial.neg_f0()
            if trial_energy <= energy + 1e-15 * max(1.0, abs(energy)):
                break
            step /= 2
            if step < 1e-12:
                break
        if step < 1e-12:
            break
        point, energy = trial, trial_energy
        m = point.m_diagonal()
        steps += 1
        residuals.append(balance_residual(m))
        energies.append(energy)
        steps_taken.append(step)
    converged = residuals[-1] < tol
    report = {
        "k": k,
        "method": method,
        "steps": steps,
        "converged": converged,
        "residual": residuals[-1],
        "residuals": residuals,
        "neg_F0": energies,
        "max_neg_F0_increase": float(np.max(np.diff(energies))) if len(energies) > 1 else 0.0,
        "step_sizes": steps_taken,
        "M": m.tolist(),
        "kappa": float(m.mean()),
        "lam": point.lam.tolist(),
    }
    if not converged and raise_on_failure:
        raise NoConvergence(f"balancing did not reach tol {tol} in {steps} steps", residuals[-1])
    weights = np.exp(point.lam + log_binomial(k))
    return weights, report
