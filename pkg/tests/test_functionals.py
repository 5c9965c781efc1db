import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csck import functionals as fn
from csck.errors import NonPositiveMetric, ValidationError
from csck.geodesics import metric_geodesic
from csck.p1metric import InvariantMetricP1, bump_family, metric_from_json

FS = InvariantMetricP1.fubini_study(24)
NAMES = {"I": lambda b, p: fn.eval_I_J(b, p)[0], "J": lambda b, p: fn.eval_I_J(b, p)[1],
         "F0": fn.eval_F0, "F": fn.eval_F, "K": fn.eval_K}


def test_round_metric_has_curvature_two_and_unit_volume():
    assert FS.volume() == pytest.approx(1.0, abs=1e-14)
    assert np.max(np.abs(FS.scalar_curvature() - 2)) < 1e-12


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_metric_json_round_trip(seed):
    m = bump_family(seed, degree=20)
    data = m.to_json(256)
    assert np.allclose(metric_from_json(data).coeffs, m.coeffs, atol=1e-15)
    del data["legendre"]
    from_grid = metric_from_json(data)
    assert np.max(np.abs(from_grid.phi(np.linspace(0, 1, 11)) - m.phi(np.linspace(0, 1, 11)))) < 1e-10


def test_bad_metric_json():
    with pytest.raises(ValidationError):
        metric_from_json({"kind": "other"})
    with pytest.raises(ValidationError):
        metric_from_json({"kind": "p1-invariant", "grid": [0.0, 0.0, 0.0], "m": 5})


@pytest.mark.parametrize("name", sorted(NAMES))
def test_functionals_vanish_at_zero(name):
    assert NAMES[name](FS, np.zeros(25)) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("name", ["F0", "F", "K", "I", "J"])
@pytest.mark.parametrize("seed", [0, 5])
def test_first_variation_matches_finite_differences(name, seed):
    psi = fn.random_potential(seed, FS)
    eta = fn.random_potential(seed + 100, FS)
    fd = fn.directional_derivative(NAMES[name], FS, psi, eta, step=1e-5)
    assert fn.variation(name, FS, psi, eta) == pytest.approx(fd, abs=1e-6)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), shift=st.floats(-5, 5))
def test_k_energy_and_f_ignore_constants(seed, shift):
    psi = fn.random_potential(seed, FS)
    c = FS.kernel.constant(shift)
    assert fn.eval_K(FS, psi + c) == pytest.approx(fn.eval_K(FS, psi), abs=1e-10)
    assert fn.eval_F(FS, psi + c) == pytest.approx(fn.eval_F(FS, psi), abs=1e-10)
    # F0 shifts by minus the constant (unit volume)
    assert fn.eval_F0(FS, psi + c) == pytest.approx(fn.eval_F0(FS, psi) - shift, abs=1e-10)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_closed_form_k_energy_matches_path_integral(seed):
    psi = fn.random_potential(seed, FS)
    assert fn.eval_K(FS, psi) == pytest.approx(fn.k_energy_path_integral(FS, psi), abs=1e-8)


def test_k_energy_is_convex_along_an_exact_geodesic():
    end = bump_family(4, degree=24, amplitude=0.06)
    times = np.linspace(0, 1, 9)
    values = []
    for t in times:
        slice_ = metric_geodesic(FS, end, FS.kernel.nodes, t)
        coeffs = FS.kernel.project(slice_.phi)
        values.append(fn.eval_K(FS, coeffs))
    assert np.min(np.diff(values, 2)) >= -1e-6


def test_k_energy_decreases_toward_the_round_metric():
    psi = fn.random_potential(7, FS)
    assert fn.eval_K(FS.with_coeffs(psi), -psi) < 0


def test_non_positive_metrics_are_rejected():
    bad = np.zeros(25)
    bad[2] = 5.0
    with pytest.raises(NonPositiveMetric):
        fn.eval_K(FS, bad)
    with pytest.raises(ValidationError):
        fn.variation("X", FS, np.zeros(25), np.zeros(25))
