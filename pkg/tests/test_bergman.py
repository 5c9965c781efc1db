import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csck.bergman import (
    MAX_K,
    balance_iterate,
    balance_residual,
    density_of_states,
    hilbert_point,
    integrated_density,
    lu_coefficient_check,
    m_matrix,
    section_norms,
)
from csck.errors import InsufficientData, NoConvergence, QuadratureOverflow
from csck.p1metric import InvariantMetricP1, bump_family
from csck.verify import perturbed_metric

FS = InvariantMetricP1.fubini_study(16)


def test_round_metric_section_norms():
    # ||x^a||^2 = a! (k - a)! / (k + 1)! times binomial, i.e. 1 / ((k + 1) C(k, a)) before normalisation
    assert section_norms(FS, 2).norms == pytest.approx([1 / 3, 1 / 6, 1 / 3], rel=1e-12)


@pytest.mark.parametrize("k", [1, 4, 17, 32])
def test_round_metric_density_is_constant(k):
    x = np.linspace(0, 1, 41)
    assert np.max(np.abs(density_of_states(FS, k, x) - (k + 1))) < 1e-8


@pytest.mark.parametrize("seed", [0, 1])
@pytest.mark.parametrize("k", [3, 16, 64])
def test_density_integrates_to_dimension(seed, k):
    metric = bump_family(seed, degree=20, amplitude=0.05)
    assert integrated_density(metric, k) == pytest.approx(k + 1, abs=1e-8)
    assert np.sum(m_matrix(metric, k)) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(shift=st.floats(-3, 3), k=st.integers(1, 24))
def test_density_ignores_constant_shifts(shift, k):
    m = perturbed_metric()
    shifted = m.with_coeffs(m.coeffs + m.kernel.constant(shift))
    x = np.linspace(0, 1, 9)
    assert density_of_states(shifted, k, x) == pytest.approx(density_of_states(m, k, x), rel=1e-12)


def test_lu_coefficient_recovers_half_the_curvature():
    rep = lu_coefficient_check(perturbed_metric(), (8, 16, 32, 64))
    assert rep["max_relative_deviation"] < 0.05


def test_lu_needs_three_values_of_k():
    with pytest.raises(InsufficientData):
        lu_coefficient_check(FS, (8, 16))


def test_large_k_is_refused():
    with pytest.raises(QuadratureOverflow):
        section_norms(FS, MAX_K + 1)


def test_round_metric_is_already_balanced():
    _, rep = balance_iterate(FS, 6)
    assert rep["steps"] == 0 and rep["converged"]
    assert balance_residual(m_matrix(FS, 6)) < 1e-12


@pytest.mark.parametrize("method", ["fixed-point", "gradient"])
def test_balancing_decreases_the_energy_monotonically(method):
    start = bump_family(0, degree=24, amplitude=0.08)
    _, rep = balance_iterate(start, 4, tol=1e-8, max_steps=2000, method=method)
    assert rep["converged"]
    assert rep["max_neg_F0_increase"] <= 0.0
    assert rep["residual"] < 1e-8


def test_balancing_reports_non_convergence():
    with pytest.raises(NoConvergence) as info:
        balance_iterate(bump_family(0, degree=24, amplitude=0.08), 8, max_steps=2)
    assert info.value.residual > 1e-8


def test_hilbert_point_of_round_metric_reproduces_it():
    pot = hilbert_point(FS, 8)
    x = np.linspace(0.05, 0.95, 7)
    assert pot.density(x) == pytest.approx(np.ones_like(x), rel=1e-10)
