import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from freepoly.linearize import (
    LinearPencil,
    linearize,
    linearize_monomial,
    linearize_selfadjoint,
    linearize_sum,
    pencil_from_dict,
    pencil_to_dict,
    schur_check,
)
from freepoly.ncpoly import NCPolynomial, adjoint, parse

from conftest import random_hermitian

words = st.lists(st.sampled_from([1, 2]), max_size=4).map(tuple)
coeffs = st.builds(complex, st.floats(-2, 2), st.floats(-2, 2))
selfadjoint_polys = (st.lists(st.tuples(words, coeffs), min_size=1, max_size=5)
                     .map(NCPolynomial).map(lambda q: q + adjoint(q))
                     .filter(lambda p: not p.is_zero()))


def test_monomial_xy_block_form():
    L = linearize_monomial(1.0, (1, 2))
    assert np.array_equal(L.gamma0, [[0, 0, 1], [0, 0, -1], [0, -1, 0]])
    assert np.array_equal(L.gamma1, [[0, 0, 0], [0, 1, 0], [0, 0, 0]])
    assert np.array_equal(L.gamma2, [[0, 0, 0], [0, 0, 0], [1, 0, 0]])


def test_low_degree_is_trivial():
    L = linearize(parse("x + y"))
    assert L.n == 1
    assert L.gamma1[0, 0] == 1 and L.gamma2[0, 0] == 1


def test_sum_dimension():
    L1 = linearize_monomial(2.0, (1, 2, 1))
    L2 = linearize_monomial(1.0, (2, 2))
    assert linearize_sum(L1, L2).n == L1.n + L2.n - 1


def test_anticommutator_pencil():
    L = linearize_selfadjoint(parse("x*y + y*x"))
    assert L.n == 5
    assert L.hermiticity_defect() == 0


def test_rejects_non_selfadjoint():
    with pytest.raises(ValueError):
        linearize_selfadjoint(parse("x*y"))


def test_schur_check_plain_linearization(rng):
    p = parse("x*y*x - 2i*y*y + 0.5*x")
    L = linearize(p)
    S1, S2 = random_hermitian(rng, 4), random_hermitian(rng, 4)
    assert schur_check(p, L, S1, S2, 1.5 + 2j) < 1e-10


def test_dict_roundtrip():
    L = linearize_selfadjoint(parse("x*x*y + y*x*x + 1"))
    assert all(np.array_equal(a, b) for a, b in
               zip(L.gammas, pencil_from_dict(pencil_to_dict(L)).gammas))


def test_pencil_readonly():
    L = LinearPencil.zero()
    with pytest.raises(ValueError):
        L.gamma0[0, 0] = 1


@given(selfadjoint_polys, st.integers(0, 2 ** 32 - 1))
def test_selfadjoint_pencil_property(p, seed):
    rng = np.random.default_rng(seed)
    L = linearize_selfadjoint(p)
    assert L.hermiticity_defect() < 1e-14
    S1, S2 = random_hermitian(rng, 3), random_hermitian(rng, 3)
    assert schur_check(p, L, S1, S2, 0.3 + 2j) < 1e-8
