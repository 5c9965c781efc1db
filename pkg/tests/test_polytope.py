from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csck.errors import EmptyInterior, NonPrimitiveNormal, NotDelzant, Unbounded
from csck.polytope import (
    box,
    ehrhart_fit,
    interval,
    lattice_points,
    polytope_from_json,
    polytope_to_json,
    quadrature,
    sigma_measure,
    simplex,
)


def facets(*pairs):
    return {"dim": len(pairs[0][0]), "facets": [{"normal": list(n), "offset": o} for n, o in pairs]}


@pytest.mark.parametrize(
    "poly, volume, sigma_total",
    [
        (interval(), 1.0, 2.0),
        (interval(3), 3.0, 2.0),
        (simplex(2), 0.5, 3.0),
        (box([1, 2]), 2.0, 6.0),
        (simplex(3), 1 / 6, 4 * 0.5),
    ],
)
def test_volume_and_boundary_measure(poly, volume, sigma_total):
    assert poly.volume == pytest.approx(volume, abs=1e-14)
    assert sigma_measure(poly).total == pytest.approx(sigma_total, abs=1e-14)


def test_simplex_facets_have_unit_sigma_mass():
    # the hypotenuse has Euclidean length sqrt 2 and normal length sqrt 2
    assert sigma_measure(simplex(2)).per_facet == pytest.approx((1.0, 1.0, 1.0))


@pytest.mark.parametrize(
    "data, error",
    [
        (facets(([1, 0], "0"), ([0, 1], "0"), ([-1, -2], "2")), NotDelzant),
        (facets(([1, 0], "0"), ([0, 1], "0")), Unbounded),
        (facets(([2], "0"), ([-1], "1")), NonPrimitiveNormal),
        (facets(([1], "0"), ([-1], "-1")), EmptyInterior),
    ],
)
def test_invalid_polytopes_are_rejected(data, error):
    with pytest.raises(error):
        polytope_from_json(data)


def test_json_round_trip():
    poly = box([2, 1])
    again = polytope_from_json(polytope_to_json(poly))
    assert again.volume == poly.volume
    assert set(again.vertices) == set(poly.vertices)


@pytest.mark.parametrize("k", [1, 2, 3, 7])
def test_simplex_lattice_count(k):
    assert len(lattice_points(simplex(2), k)) == comb(k + 2, 2)


def test_ehrhart_polynomial_of_triangle():
    # (k + 1)(k + 2) / 2
    assert ehrhart_fit(simplex(2), 8) == pytest.approx([0.5, 1.5, 1.0], abs=1e-9)


def test_quadrature_is_exact_for_monomials():
    rule = quadrature(simplex(2), 8)
    assert rule.integrate(lambda x: x[:, 0] * x[:, 1]) == pytest.approx(1 / 24, abs=1e-15)
    assert rule.integrate(lambda x: x[:, 0] ** 3) == pytest.approx(1 / 20, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(a=st.integers(1, 5), b=st.integers(1, 5))
def test_box_volume_and_lattice_points(a, b):
    poly = box([a, b])
    assert poly.volume == pytest.approx(a * b)
    assert len(lattice_points(poly, 1)) == (a + 1) * (b + 1)
    assert all(isinstance(c, Fraction) for v in poly.vertices for c in v)


def test_contains_is_strict_interior():
    poly = interval()
    assert poly.contains(np.array([0.5]))
    assert not poly.contains(np.array([0.0]))
