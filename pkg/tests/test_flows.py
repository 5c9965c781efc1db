import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csck.errors import ValidationError
from csck.flows import (
    calabi_functional,
    calabi_velocity,
    convergence_criterion,
    dissipation_check,
    harnack_fit,
    kr_initial_constant,
    kr_velocity,
    monotonicity_report,
    run_calabi_flow,
    run_kr_flow,
)
from csck.p1metric import InvariantMetricP1, bump_family

FS = InvariantMetricP1.fubini_study(12)
START = bump_family(0, degree=12, amplitude=0.05)


@pytest.fixture(scope="module")
def kr_run():
    return run_kr_flow(START, T=2.0, dt=1e-2)


@pytest.fixture(scope="module")
def calabi_run():
    return run_calabi_flow(bump_family(1, degree=10, amplitude=0.05), T=0.3, dt=1e-3)


def test_round_metric_is_stationary():
    assert np.max(np.abs(calabi_velocity(FS, np.zeros(13)))) < 1e-12
    # the Ricci potential of FS vanishes, so the KR velocity is MU times the potential
    assert np.max(np.abs(kr_velocity(FS, np.zeros(13)))) < 1e-12
    assert calabi_functional(FS) < 1e-24


def test_kr_flow_preserves_volume(kr_run):
    assert np.max(np.abs(kr_run.series("volume") - 1)) < 1e-8


@pytest.mark.parametrize("key", ["K", "F"])
def test_kr_flow_decreases_energies(kr_run, key):
    assert monotonicity_report(kr_run, (key,), slack=1e-12)[key]["ok"]


def test_kr_harnack_quantity_is_conserved(kr_run):
    assert np.ptp(kr_run.series("harnack")) < 1e-10


def test_kr_curvature_decays(kr_run):
    r = kr_run.series("R_sup")
    assert r[-1] < 0.05 * r[0]
    conv = convergence_criterion(kr_run.series("t"), r)
    assert conv["verdict"] == "bounded" and conv["decay_rate"] > 0


def test_harnack_fit_returns_finite_constants(kr_run):
    fit = harnack_fit(kr_run)
    assert all(np.isfinite(v) for v in fit.values())


def test_calabi_flow_decreases_calabi_functional_and_dissipates_k_energy(calabi_run):
    assert monotonicity_report(calabi_run, ("calabi", "K"), slack=1e-14)["calabi"]["ok"]
    assert dissipation_check(calabi_run)["rel_error_mid"] < 0.01
    assert np.max(np.abs(calabi_run.series("volume") - 1)) < 1e-8


def test_dissipation_check_requires_a_calabi_run(kr_run):
    with pytest.raises(ValidationError):
        dissipation_check(kr_run)


def test_initial_constant_keeps_the_potential_bounded():
    rep = kr_initial_constant(START, T=8.0, dt=1e-2, check_horizon=6.0)
    # the discrete and continuous constants differ by the time-stepping error
    assert rep["c0"] == pytest.approx(rep["c0_formula"], abs=1e-6)
    assert rep["sup_phidot_after_1_corrected"] < 10 * rep["phidot_at_1_corrected"]
    assert rep["sup_phidot_uncorrected"] > rep["sup_phidot_after_1_corrected"]


@settings(max_examples=20, deadline=None)
@given(rate=st.floats(0.2, 5.0), scale=st.floats(1e-3, 10.0))
def test_convergence_fit_recovers_exponential_rates(rate, scale):
    t = np.linspace(0, 10, 201)
    rep = convergence_criterion(t, scale * np.exp(-rate * t) + 0.0)
    if rep["decay_rate"] is not None:
        assert rep["decay_rate"] == pytest.approx(rate, rel=1e-6)
    assert rep["verdict"] == "bounded"


@pytest.mark.parametrize("runner", [run_kr_flow, run_calabi_flow])
def test_bad_time_parameters(runner):
    with pytest.raises(ValidationError):
        runner(FS, T=-1.0)
