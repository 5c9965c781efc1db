from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csck.errors import DegenerateConfiguration, InsufficientData, ValidationError
from csck.polytope import box, interval, simplex
from csck.potentials import guillemin_potential, potential_with_polynomial
from csck.stability import (
    PLConvexFunction,
    calabi_lower_bound,
    classical_futaki_character,
    destabilizer_search,
    dt_norm,
    futaki,
    futaki_from_weights,
    toric_k_energy,
    weights_from_pl,
)
from csck.verify import _trapezoid, futaki_pairs

ABS_HALF = PLConvexFunction.from_json({"pieces": [{"a": ["1"], "b": "-1/2"}, {"a": ["-1"], "b": "1/2"}]})


def test_futaki_of_kink_on_interval():
    # boundary term 1/2 + 1/2, interior -2 * 1/4
    assert futaki(interval(), ABS_HALF) == pytest.approx(0.5, abs=1e-14)


@pytest.mark.parametrize("poly", [interval(), simplex(2), box([1, 1]), simplex(3)])
def test_classical_character_vanishes_on_symmetric_polytopes(poly):
    assert np.max(np.abs(classical_futaki_character(poly))) < 1e-12


def test_classical_character_of_trapezoid_is_nonzero():
    assert np.max(np.abs(classical_futaki_character(_trapezoid()))) > 0.1


@settings(max_examples=30, deadline=None)
@given(
    a=st.fractions(-3, 3, max_denominator=6),
    b=st.fractions(-3, 3, max_denominator=6),
    scale=st.integers(1, 4),
)
def test_futaki_is_linear_and_ignores_affine_parts_on_cscK_polytopes(a, b, scale):
    poly = simplex(2)
    f = PLConvexFunction(((((Fraction(1), Fraction(0)), Fraction(0))), ((Fraction(0), Fraction(1)), Fraction(0))))
    shifted = PLConvexFunction(tuple(((s[0] + a, s[1] + b), o + 1) for s, o in f.pieces))
    assert futaki(poly, shifted) == pytest.approx(futaki(poly, f), abs=1e-12)
    assert futaki(poly, f.scaled(scale)) == pytest.approx(scale * futaki(poly, f), abs=1e-12)


def test_dimension_mismatch_is_rejected():
    with pytest.raises(ValidationError):
        futaki(box([1, 1]), ABS_HALF)


def test_weights_are_integral_and_traceless():
    spec = weights_from_pl(interval(), PLConvexFunction.affine([1], 0), 4)
    assert spec.B.tolist() == [0, 1, 2, 3, 4]
    assert spec.traceless.tolist() == [-2, -1, 0, 1, 2]


@pytest.mark.parametrize("name, poly, f", futaki_pairs(), ids=[p[0] for p in futaki_pairs()])
def test_weight_asymptotics_reproduce_polytope_futaki(name, poly, f):
    _, rep = futaki_from_weights(poly, f, (4, 8, 16, 32))
    assert rep["calibrated"] == pytest.approx(futaki(poly, f), rel=0.02)


def test_weight_fit_needs_enough_k():
    with pytest.raises(InsufficientData):
        futaki_from_weights(interval(), ABS_HALF, (4, 8))


def test_dt_norm_of_coordinate_function():
    # || x - 1/2 ||^2 over [0, 1] is 1/12
    d = dt_norm(interval(), PLConvexFunction.affine([1], 0), (8, 16, 32, 64))
    assert d**2 == pytest.approx(1 / 12, rel=1e-3)


def test_calabi_bound_degenerates_for_constants():
    with pytest.raises(DegenerateConfiguration):
        calabi_lower_bound(interval(), PLConvexFunction.constant(1, 2), (4, 8, 16, 32))


def test_destabilizer_search_on_cscK_and_non_cscK_polytopes():
    assert not destabilizer_search(simplex(2), n_offsets=4)["destabilizer_found"]
    assert destabilizer_search(_trapezoid(), n_offsets=4)["destabilizer_found"]


def test_k_energy_is_minimized_by_the_canonical_potential_on_the_simplex():
    base = toric_k_energy(guillemin_potential(simplex(2)))
    for coef in (0.1, -0.1, 0.3):
        bumped = potential_with_polynomial(simplex(2), [((2, 0), coef), ((1, 1), coef / 2)])
        assert toric_k_energy(bumped) > base
    assert base == pytest.approx(toric_k_energy(guillemin_potential(simplex(2)).add_affine([0.3, -0.2], 1.0)),
                                 abs=1e-10)
