from __future__ import annotations

import math
from fractions import Fraction

import gmpy2
import pytest
from gmpy2 import mpfr, mpq
from hypothesis import given, settings, strategies as st

from readop.basis import (G, FVector, Z, ZCopy, copy_index, dual_norm, e_in_f, e_to_f, f_identity,
                          f_in_e, f_to_e, lambda_log2, layoff_weight, norm)
from readop.errors import NotLayOff, OutOfHorizon, ParseError
from readop.schedule import Lp, build_schedule, desk_params

TIGHT = mpfr(2) ** -200

small_rationals = st.fractions(min_value=-4, max_value=4, max_denominator=64).map(
    lambda f: mpq(f.numerator, f.denominator))


def test_f_identity_examples(desk):
    assert f_identity(desk, 0) == G(0)
    assert f_identity(desk, 16) == Z(1)
    assert f_identity(desk, 17) == G(16)
    assert f_identity(desk, 5) == G(5)


def test_f_identity_on_copies(th1):
    s = th1.schedule
    assert f_identity(s, 16) == ZCopy(1, 1)
    assert copy_index(s, 1, 1) == 16
    assert copy_index(s, 2, 1) == s.a(2)


def test_lambda_exponents(desk):
    # log2 lambda_j = (l/2 + k + 1 - j) / sqrt(l) on the first lay-off (k = 0, l = 15)
    assert abs(lambda_log2(desk, 1) - mpfr(7.5) / gmpy2.sqrt(mpfr(15))) < TIGHT
    assert abs(lambda_log2(desk, 15) + mpfr(6.5) / gmpy2.sqrt(mpfr(15))) < TIGHT
    assert float(lambda_log2(desk, 1)) == pytest.approx(1.9364916731037085, rel=1e-15)


def test_lambda_ratio_between_neighbours(desk):
    ratio = layoff_weight(desk, 3) / layoff_weight(desk, 4)
    assert abs(gmpy2.log2(ratio) - 1 / gmpy2.sqrt(mpfr(15))) < TIGHT


def test_lambda_requires_layoff(desk):
    with pytest.raises(NotLayOff):
        lambda_log2(desk, 16)


def test_root_and_a_index_vectors(desk):
    assert e_in_f(desk, 0) == FVector.unit(0)
    assert e_in_f(desk, 16) == FVector({0: 1, 16: mpq(1, 4)})
    assert norm(desk, e_in_f(desk, 16)) == mpq(5, 4)


def test_first_b_vector(desk):
    e257 = e_in_f(desk, 257)
    assert e257[257] == 1
    assert abs(e257[1] - 256 / layoff_weight(desk, 1)) < TIGHT
    assert f_in_e(desk, 257) == FVector({1: -256, 257: 1})


def test_second_a_vector_stays_close_to_root(desk):
    a2 = desk.step(2).a
    ea = e_in_f(desk, a2)
    assert ea == FVector({0: 1, 16: mpq(1, 4), a2: mpq(1, 4)})
    assert norm(desk, ea - FVector.unit(0)) == mpq(1, 4)


def test_last_b_vector_collects_the_whole_chain(desk):
    st1 = desk.step(1)
    v = e_in_f(desk, st1.nu)
    assert v.max_index() == st1.nu and v[st1.nu] == 1
    # (b)-chain through a_1: b^16 times e_16 = f_0 + f_16 / 4
    assert v[0] == mpq(st1.b) ** st1.a
    assert v[16] == mpq(st1.b) ** st1.a / 4


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=131584))
def test_change_of_basis_is_triangular(j):
    s = build_schedule(desk_params(n_max=1))
    v = e_in_f(s, j)
    assert v.max_index() == j
    assert v[j] != 0
    w = f_in_e(s, j)
    assert w.max_index() == j
    assert abs(w[j] * v[j] - 1) < TIGHT


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(st.integers(min_value=0, max_value=6000), small_rationals, max_size=5))
def test_e_f_round_trip(coeffs):
    s = build_schedule(desk_params(n_max=1))
    ex = FVector(coeffs)
    back = f_to_e(s, e_to_f(s, ex))
    diff = back - ex
    assert diff.is_zero() or diff.max_abs() < mpfr(2) ** -150 * (1 + ex.max_abs())


def test_e_to_f_rejects_out_of_horizon(desk_one_step):
    with pytest.raises(OutOfHorizon):
        e_to_f(desk_one_step, {desk_one_step.horizon + 1: 1})


def test_norm_mixes_lp_and_z_parts(desk):
    # l1 part |1| + |-2| plus the c0 block max(|1/4|)
    x = FVector({0: 1, 5: -2, 16: mpq(1, 4)})
    assert norm(desk, x) == mpq(13, 4)


def test_norm_l2():
    s = build_schedule(desk_params(n_max=1, space=Lp(Fraction(2))))
    assert norm(s, FVector({0: 3, 1: 4})) == 5


def test_dual_norm_is_one(desk):
    assert dual_norm(desk, 0) == 1
    assert dual_norm(desk, 16) == 1
    assert dual_norm(desk, 300) == 1


# --------------------------------------------------------------------------
# FVector arithmetic and text


vectors = st.dictionaries(st.integers(min_value=0, max_value=50), small_rationals, max_size=6).map(FVector)


@given(vectors, vectors)
def test_addition_is_commutative_and_cancels(x, y):
    assert x + y == y + x
    assert (x + y - y) == x


@given(vectors)
def test_vector_text_round_trip(x):
    assert FVector.from_text(x.to_text()) == x


@given(vectors, st.integers(min_value=0, max_value=20))
def test_shift_and_restrict(x, k):
    shifted = x.shift(k)
    assert [j - k for j in shifted.support] == x.support
    assert shifted.restrict(k, 10**6) == shifted


def test_zero_coefficients_are_dropped():
    assert FVector({3: 0, 4: 1}).support == [4]
    assert FVector().is_zero()


def test_from_text_rejects_garbage():
    with pytest.raises(ParseError):
        FVector.from_text("1 2 3")


def test_exactness_flag():
    assert FVector({0: mpq(1, 3)}).is_exact()
    assert not FVector({0: gmpy2.sqrt(mpfr(2))}).is_exact()
    assert math.isclose(float(FVector({0: mpq(1, 3)}).max_abs()), 1 / 3)
