import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csck.errors import SingularHessian, ValidationError
from csck.polytope import box, interval, simplex
from csck.potentials import (
    abreu_scalar_curvature,
    convexity_report,
    finite_difference_curvature,
    futaki_normalization,
    guillemin_potential,
    kahler_to_symplectic,
    legendre_to_kahler,
    mean_scalar_curvature,
    potential_with_polynomial,
)


@pytest.mark.parametrize(
    "poly, value",
    [(interval(), 2.0), (simplex(2), 6.0), (box([1, 1]), 4.0), (simplex(3), 12.0)],
)
def test_guillemin_curvature_is_constant_on_simplices_and_boxes(poly, value):
    # product of intervals: sum of factors; n-simplex: n (n + 1)
    rng = np.random.default_rng(3)
    pts = []
    while len(pts) < 20:
        p = rng.uniform(0.02, 0.98, poly.dimension)
        if poly.contains(p, margin=1e-3):
            pts.append(p)
    r = abreu_scalar_curvature(guillemin_potential(poly), np.array(pts))
    assert np.max(np.abs(r - value)) < 1e-8


def perturbed_triangle():
    return potential_with_polynomial(simplex(2), [((2, 0), 0.1), ((1, 1), 0.05), ((0, 3), -0.02)])


@pytest.mark.parametrize("point", [[0.2, 0.3], [0.05, 0.9], [0.6, 0.1]])
def test_curvature_matches_finite_differences(point):
    u = perturbed_triangle()
    assert abreu_scalar_curvature(u, point) == pytest.approx(finite_difference_curvature(u, point), abs=1e-5)


def test_average_curvature_is_fixed_by_the_polytope():
    u = perturbed_triangle()
    assert mean_scalar_curvature(u) == pytest.approx(futaki_normalization(simplex(2)), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(0.05, 0.95), y=st.floats(0.05, 0.95))
def test_legendre_round_trip(x, y):
    poly = box([1, 1])
    u = potential_with_polynomial(poly, [((2, 0), 0.3), ((0, 2), 0.1)])
    xi, _ = legendre_to_kahler(u, [x, y])
    assert kahler_to_symplectic(u, xi) == pytest.approx([x, y], abs=1e-10)


def test_boundary_points_are_rejected():
    with pytest.raises(ValidationError):
        abreu_scalar_curvature(guillemin_potential(interval()), [0.0])


def test_concave_correction_is_detected():
    u = potential_with_polynomial(interval(), [((2,), -3.0)])
    assert convexity_report(u)["min_eigenvalue"] < 0
    with pytest.raises(SingularHessian):
        abreu_scalar_curvature(u, [0.5])
