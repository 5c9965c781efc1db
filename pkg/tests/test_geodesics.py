import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csck.errors import SingularHessian, ValidationError
from csck.geodesics import (
    BergmanPath,
    GeodesicSpec,
    bergman_vs_exact,
    exact_toric_geodesic,
    geodesic_equation_residual,
    geodesic_path,
    mass_identity_check,
    metric_geodesic,
    ray_path,
    ray_report,
    ray_weights,
    segment_weights,
    translate_ray,
    uniform_grid,
)
from csck.p1metric import InvariantMetricP1, bump_family
from csck.polytope import interval, simplex
from csck.potentials import abreu_scalar_curvature, guillemin_potential, potential_with_polynomial
from csck.stability import PLConvexFunction
from csck.verify import perturbed_metric

FS = InvariantMetricP1.fubini_study(16)
END = perturbed_metric().with_coeffs(2 * perturbed_metric().coeffs)
X = uniform_grid(32)


def test_symplectic_interpolation_endpoints_and_convexity():
    u0 = guillemin_potential(simplex(2))
    u1 = potential_with_polynomial(simplex(2), [((2, 0), 0.4)])
    assert exact_toric_geodesic(u0, u1, 0.0) is u0
    assert exact_toric_geodesic(u0, u1, 1.0) is u1
    mid = exact_toric_geodesic(u0, u1, 0.5)
    assert mid.hessian(np.array([[0.2, 0.2]]))[0] == pytest.approx(
        0.5 * (u0.hessian(np.array([[0.2, 0.2]]))[0] + u1.hessian(np.array([[0.2, 0.2]]))[0]))
    assert np.isfinite(abreu_scalar_curvature(mid, [0.3, 0.3]))


def test_non_convex_endpoint_is_refused():
    u0 = guillemin_potential(interval())
    u1 = potential_with_polynomial(interval(), [((2,), -3.0)])
    with pytest.raises(SingularHessian):
        exact_toric_geodesic(u0, u1, 0.9)


def test_metric_geodesic_hits_both_endpoints():
    assert np.max(np.abs(metric_geodesic(FS, END, X, 0.0).phi)) < 1e-12
    assert metric_geodesic(FS, END, X, 1.0).phi == pytest.approx(END.phi(X) - FS.phi(X), abs=1e-12)


@pytest.mark.parametrize("t", [0.25, 0.5, 0.8])
def test_metric_geodesic_solves_the_geodesic_equation(t):
    assert geodesic_equation_residual(FS, END, np.array([0.2, 0.5, 0.7]), t) < 1e-5


def test_geodesic_is_reversible():
    forward = metric_geodesic(FS, END, X, 0.3).phi_abs
    backward = metric_geodesic(END, FS, X, 0.7).phi_abs
    assert forward == pytest.approx(backward, abs=1e-12)


def test_points_outside_the_interval_are_rejected():
    with pytest.raises(ValidationError):
        metric_geodesic(FS, END, [0.0, 0.5], 0.5)


def test_bergman_segment_converges_but_faster_than_log_k_over_k():
    rep = bergman_vs_exact(GeodesicSpec("segment", FS, END, k_list=(4, 8, 16), grid=32, tsteps=8))
    assert rep["strictly_decreasing"]
    assert rep["reverse_ratio_max"] == pytest.approx(1.0, abs=1e-6)
    assert rep["min_second_difference"] >= -1e-12
    # errors behave like 1 / k^2, so the fitted (log k / k) exponent is well above 1
    assert rep["rate_exponent"] > 2


@pytest.mark.parametrize("k", [4, 8])
def test_bergman_path_with_equal_endpoints_matches_density_expansion(k):
    lam, _ = segment_weights(END, END, k)
    path = BergmanPath.from_weights(END, k, lam)
    err = np.max(np.abs(path.phi(X, 0.5)))
    assert err < 1.5 * np.max(np.abs(END.scalar_curvature(X))) / (2 * k**2) + 1e-3


def test_mass_identity_on_smooth_paths():
    assert mass_identity_check(lambda x, t: t * t * x * (1 - x), 0.0, 1.0, 32, 24)["gap"] < 1e-8
    assert abs(mass_identity_check(geodesic_path(FS, END), 0.0, 1.0, 32, 24)["lhs"]) < 1e-5


@settings(max_examples=10, deadline=None)
@given(slope=st.sampled_from([-2, -1, 1, 3]), t=st.floats(0.1, 2.0))
def test_translate_ray_starts_at_the_start_metric(slope, t):
    values = translate_ray(FS, float(slope), X, 0.0)
    assert np.max(np.abs(values)) < 1e-12
    assert np.all(np.isfinite(translate_ray(FS, float(slope), X, t)))


def test_affine_ray_is_a_torus_translation():
    spec = GeodesicSpec("ray", FS, pl=PLConvexFunction.affine([1], 0), polytope=interval(),
                        k_list=(4, 8, 16), grid=32, tsteps=8, horizon=1.0)
    rep = ray_report(spec, mass_steps=16)
    errs = [r["translate_error"] for r in rep["rows"]]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert max(abs(r["mass_rhs"]) for r in rep["rows"]) < 1e-10


def test_kink_ray_mass_decays_with_k():
    f = PLConvexFunction.from_json({"pieces": [{"a": ["1"], "b": "-1/2"}, {"a": ["-1"], "b": "1/2"}]})
    spec = GeodesicSpec("ray", FS, pl=f, polytope=interval(), k_list=(4, 8, 16), grid=32, tsteps=8, horizon=3.0)
    rep = ray_report(spec, mass_steps=64)
    masses = [r["mass_rhs"] for r in rep["rows"]]
    assert all(b < a for a, b in zip(masses, masses[1:]))
    assert max(r["mass_gap"] for r in rep["rows"]) < 1e-4
    assert rep["mass_exponent"] == pytest.approx(1.0, abs=0.3)


def test_ray_weights_need_the_unit_interval():
    with pytest.raises(ValidationError):
        ray_weights(PLConvexFunction.affine([1], 0), interval(2), 4)


def test_ray_is_convex_in_time():
    lam, _ = ray_weights(PLConvexFunction.affine([1], 0), interval(), 8)
    vals = ray_path(FS, 8, lam).grid(X, np.linspace(0, 2, 9))
    assert np.min(vals[2:] - 2 * vals[1:-1] + vals[:-2]) >= -1e-12


def test_geodesic_spec_validation():
    with pytest.raises(ValidationError):
        GeodesicSpec("segment", FS)
    with pytest.raises(ValidationError):
        GeodesicSpec("spiral", FS, END)
