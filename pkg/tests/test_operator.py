from __future__ import annotations

from fractions import Fraction

import pytest
from gmpy2 import mpfr, mpq
from hypothesis import given, settings, strategies as st

from readop.basis import FVector, e_in_f, f_to_e, layoff_weight, norm
from readop.errors import (BudgetExceeded, DomainExceeded, HorizonExceeded, NetTooLarge,
                           OutOfHorizon, StepNotBuilt)
from readop.operator import (A, Nu, Polynomial, apply, apply_poly, assemble, column_Tf, compose,
                             diagonal, identity, in_jtilde, operator_norm_bound, polynomial_net,
                             power_apply, projection_Q, sk_split, to_triplets, truncation)
from readop.scalars import parse_scalar
from readop.schedule import Grid, Targeted, build_schedule, desk_params

TIGHT = mpfr(2) ** -200


def close(x: FVector, y: FVector, tol=TIGHT) -> bool:
    d = x - y
    return d.is_zero() or d.max_abs() <= tol * (1 + y.max_abs())


def test_root_column_is_a_forward_shift(desk):
    col = column_Tf(desk, 0)
    assert col.support == [1]
    assert abs(col[1] * layoff_weight(desk, 1) - 1) < TIGHT


def test_a_column_in_e_coordinates(desk):
    # T f_16 = 4 (e_17 - e_1)
    ex = f_to_e(desk, column_Tf(desk, 16))
    assert ex.support == [1, 17]
    assert abs(ex[1] + 4) < TIGHT and ex[17] == 4


def test_interior_layoff_column_is_a_weighted_shift(desk):
    col = column_Tf(desk, 3)
    assert col.support == [4]
    assert abs(col[4] - layoff_weight(desk, 3) / layoff_weight(desk, 4)) < TIGHT


def test_column_beyond_horizon(desk_one_step):
    with pytest.raises(OutOfHorizon):
        column_Tf(desk_one_step, desk_one_step.horizon)


def test_assemble_small_truncations(desk_one_step):
    op = assemble(desk_one_step, 0)
    assert list(op.columns) == [0]
    assert to_triplets(assemble(desk_one_step, 40)) == to_triplets(assemble(desk_one_step, 40))


def test_assemble_full_first_step_column_count(desk):
    xi2 = desk.step(1).xi_next
    op = assemble(desk, xi2)
    assert len(op.columns) == xi2 + 1
    assert op.codom_max <= desk.horizon


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=20000))
def test_shift_identity_on_e_vectors(j):
    s = build_schedule(desk_params(n_max=1))
    image = FVector()
    for k, v in e_in_f(s, j).items():
        image = image + column_Tf(s, k).scale(v)
    assert close(image, e_in_f(s, j + 1))


def test_apply_respects_domain(desk_one_step):
    op = assemble(desk_one_step, 10)
    assert apply(op, FVector()).is_zero()
    with pytest.raises(DomainExceeded):
        apply(op, FVector.unit(11))


def test_truncation_kills_the_next_vector():
    assert apply(truncation(5, 10), FVector.unit(6)).is_zero()
    assert apply(truncation(5, 10), FVector.unit(5)) == FVector.unit(5)


def test_power_apply_trivial_cases(desk_one_step):
    x = FVector({0: 1, 3: mpq(1, 2)})
    assert power_apply(desk_one_step, 0, x) == x
    assert close(power_apply(desk_one_step, 1, e_in_f(desk_one_step, 5)), e_in_f(desk_one_step, 6))


@pytest.mark.parametrize("c", [1, 7, 16, 40])
def test_power_apply_matches_iterated_apply(desk_one_step, c):
    op = assemble(desk_one_step, 200)
    x = FVector({0: 1, 15: mpq(-1, 3), 16: mpq(1, 8)})
    it = x
    for _ in range(c):
        it = apply(op, it)
    assert close(power_apply(desk_one_step, c, x), it, mpfr(2) ** -190)


def test_power_apply_checks_the_horizon(desk_one_step):
    with pytest.raises(HorizonExceeded):
        power_apply(desk_one_step, 2, FVector.unit(desk_one_step.horizon - 1))


def test_apply_poly_examples(desk_one_step):
    s = desk_one_step
    x = FVector({0: 1})
    assert apply_poly(Polynomial([1]), s, x) == x
    assert close(apply_poly(Polynomial.monomial(1), s, x), e_in_f(s, 1))
    assert close(apply_poly(Polynomial.monomial(15), s, x), e_in_f(s, 15))


def test_apply_poly_is_the_sum_of_powers(desk_one_step):
    s = desk_one_step
    p = Polynomial([mpq(1, 2), 0, mpq(-1, 4), mpq(1, 8)])
    x = FVector({2: 1, 16: mpq(1, 3)})
    want = FVector()
    for d, a in p.terms():
        want = want + power_apply(s, d, x).scale(a)
    assert close(apply_poly(p, s, x), want)


# --------------------------------------------------------------------------
# shift plus nuclear split


@pytest.fixture(scope="module")
def split(desk_one_step):
    return sk_split(desk_one_step, 5000, raise_on_budget=False)


def test_split_rebuilds_the_assembled_columns(desk_one_step, split):
    cols = split.rebuild()
    for j in range(0, 5001, 13):
        assert close(cols[j], column_Tf(desk_one_step, j))


def test_nuclear_set_membership(desk_one_step, split):
    assert split.jtilde[:6] == [0, 15, 16, 256, 272, 513]
    for j in split.jtilde:
        assert in_jtilde(desk_one_step, j)
        assert not split.nuclear[j].is_zero()


def test_interior_weights_stay_in_the_rho_band(split):
    rho = mpq(1, 2)
    ws = list(split.weights.values())
    assert all(1 - rho <= w <= 1 + rho for w in ws)


def test_nuclear_bound_matches_the_column_norms(desk_one_step, split):
    total = sum((2 * norm(desk_one_step, split.nuclear[j]) for j in split.jtilde), mpq(0))
    assert abs(total - split.nuclear_bound) <= TIGHT * total


def test_budget_exceeded_carries_the_split(desk_one_step):
    with pytest.raises(BudgetExceeded) as info:
        sk_split(desk_one_step, 300)
    assert info.value.decomposition.jtilde[:3] == [0, 15, 16]


def test_root_column_alone_exceeds_the_desk_budget(desk_one_step):
    # (1 + 1) / lambda_1 with log2 lambda_1 = 7.5 / sqrt(15) is just above 1/2
    with pytest.raises(BudgetExceeded) as info:
        sk_split(desk_one_step, 14)
    dec = info.value.decomposition
    assert dec.jtilde == [0]
    assert abs(dec.nuclear_bound - 2 / layoff_weight(desk_one_step, 1)) < TIGHT
    assert float(dec.nuclear_bound) == pytest.approx(0.5225019501374271, rel=1e-12)


# --------------------------------------------------------------------------
# projections


def test_nu_projection_correction(desk):
    q = projection_Q(desk, Nu(1))
    assert q.column(desk.step(2).a) == FVector({0: -4, 16: -1})
    assert q.column(100) == FVector.unit(100)
    assert q.column(desk.step(1).nu + 1).is_zero()


def test_projection_is_idempotent(desk):
    q = projection_Q(desk, Nu(1))
    a2 = desk.step(2).a
    for j in (5, 16, 4112, 4113, a2, a2 + 1):
        once = q.column(j)
        assert close(apply(q, once), once)


def test_projection_difference_is_a_coordinate_window(desk):
    qn, qa = projection_Q(desk, Nu(1)), projection_Q(desk, A(1))
    st1 = desk.step(1)
    for j in (3, st1.a, st1.a + 1, st1.nu, st1.nu + 1, desk.step(2).a):
        diff = qn.column(j) - qa.column(j)
        want = FVector.unit(j) if st1.a < j <= st1.nu else FVector()
        assert diff == want


def test_projection_needs_the_next_step(desk_one_step):
    with pytest.raises(StepNotBuilt):
        projection_Q(desk_one_step, Nu(1))


# --------------------------------------------------------------------------
# nets and norm bounds


def test_targeted_net_is_verbatim(desk_one_step):
    zeta = Polynomial.monomial(1)
    assert polynomial_net(desk_one_step, 1, Targeted((zeta,))) == [zeta]


def test_grid_net_modes(desk_one_step):
    net = polynomial_net(desk_one_step, 1, Grid(Fraction(1), 1))
    assert len(net) == 41
    assert all(p.modulus() <= 2 for p in net)
    with pytest.raises(NetTooLarge):
        polynomial_net(desk_one_step, 1, Grid(Fraction(1, 2), desk_one_step.step(1).b))


def test_default_net_modulus(desk):
    for n in (1, 2):
        assert all(p.modulus() <= 2 for p in polynomial_net(desk, n))


def test_identity_and_diagonal_norms(desk_one_step):
    assert operator_norm_bound(identity(5), desk_one_step) == (1, 1)
    up, lo = operator_norm_bound(diagonal([mpq(1, 2)] * 6), desk_one_step)
    assert up == lo == mpq(1, 2)


def test_norm_bound_on_a_shift_block(desk_one_step):
    op = assemble(desk_one_step, 14)
    up, lo = operator_norm_bound(op, desk_one_step)
    assert lo <= up <= 2


def test_norm_bound_l2(desk_l2):
    op = compose(truncation(30, 31), assemble(desk_l2, 30))
    up, lo = operator_norm_bound(op, desk_l2)
    assert lo <= up


def test_triplet_format():
    text = to_triplets(diagonal([1, mpq(1, 2)]))
    assert text.splitlines() == ["0 0 0x1p+0", "1 1 0x8p-4"]
    rows = [ln.split() for ln in text.splitlines()]
    assert [parse_scalar(v) for _, _, v in rows] == [1, mpq(1, 2)]
