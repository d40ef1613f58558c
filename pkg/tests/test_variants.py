from __future__ import annotations

from fractions import Fraction

import mpmath
import pytest
from gmpy2 import mpfr, mpq
from hypothesis import given, settings, strategies as st

from readop.basis import FVector, G, ZCopy, e_in_f, f_identity, norm
from readop.errors import InvalidParams
from readop.operator import column_Tf
from readop.schedule import theorem1_desk_params
from readop.variants import (_tail_enclosure, build_hilbert, build_theorem1, check_copy_shift,
                             check_fact1bis, check_prop6bis, check_propnewC, demo_hypercyclic,
                             fact1bis_sides, hypercyclic_injector)
from readop.verify import q_project


# --------------------------------------------------------------------------
# multi-interval build


def test_copy_layout_round_trip(th1_three):
    lay = th1_three.layout
    s = th1_three.schedule
    seen = set()
    for d in (1, 2, 3, s.d[3] - 1):
        for r in (1, 2):
            try:
                j = lay.index(d, r)
            except Exception:
                continue
            assert j not in seen
            seen.add(j)
            assert lay.copy_of(j) == (d, r)
            assert f_identity(s, j) == ZCopy(d, r)
    assert len(seen) >= 5


def test_copy_offsets(th1):
    s = th1.schedule
    assert s.d[1:4] == [1, 2, 131587]
    assert th1.layout.index(1, 1) == 16
    assert th1.layout.index(2, 1) == s.a(2)
    assert th1.layout.index(1, 2) == 2 * s.a(2)


def test_fact1bis_identity_is_exact(th1, th1_three):
    for inst in (th1, th1_three):
        s = inst.schedule
        for n in range(2, s.n_built + 1):
            for N in range(1, n):
                lhs, rhs = fact1bis_sides(inst, n, N)
                assert lhs == rhs
                assert norm(s, lhs - FVector.unit(0)) <= mpq(1, s.a(N))


def test_fact1bis_reports(th1):
    reps = check_fact1bis(th1)
    assert [r.check_id for r in reps] == ["fact1bis.identity.n2.N1", "fact1bis.distance.n2.N1"]
    assert all(r.passed for r in reps)
    assert reps[1].measured == mpq(1, 16)


def test_fact1bis_rejects_bad_ranges(th1):
    with pytest.raises(ValueError):
        fact1bis_sides(th1, 1, 1)


def test_copy_shift_property(th1):
    rep = check_copy_shift(th1)
    assert rep.passed and rep.measured == 0
    assert rep.details["tested"] > 0
    s = th1.schedule
    # copy 2 is not the last copy before a boundary, so z_1^(2) moves to z_1^(3)
    assert column_Tf(s, th1.layout.index(2, 1)) == FVector.unit(th1.layout.index(3, 1))
    # copy 1 = d_2 - 1 sits on a boundary: its column is not a shift
    assert column_Tf(s, 16).support == [1, 17]


@settings(max_examples=40, deadline=None)
@given(st.dictionaries(st.sampled_from([0, 3, 16, 17, 526336, 1052672, 526337, 4112]),
                       st.fractions(min_value=-2, max_value=2, max_denominator=8), max_size=5))
def test_mixed_norm_splits_over_copies(coeffs):
    """||x|| = ||P_0 x||_1 + sum over copies of the c0 norm of the copy block."""
    s = build_theorem1(theorem1_desk_params()).schedule
    x = FVector({j: mpq(v.numerator, v.denominator) for j, v in coeffs.items()})
    head = sum((abs(v) for j, v in x.items() if isinstance(f_identity(s, j), G)), mpq(0))
    blocks: dict[int, mpq] = {}
    for j, v in x.items():
        ident = f_identity(s, j)
        if isinstance(ident, ZCopy):
            blocks[ident.d] = max(blocks.get(ident.d, mpq(0)), abs(v))
    assert norm(s, x) == head + sum(blocks.values(), mpq(0))


def test_prop6bis_root(th1_three):
    rep = check_prop6bis(th1_three, FVector.unit(0), 1)
    assert rep.passed
    assert rep.details["found"] == (3, 0)
    with pytest.raises(ValueError):
        check_prop6bis(th1_three, FVector(), 1)


def test_prop6bis_without_enough_steps_fails_with_caveat(th1):
    rep = check_prop6bis(th1, FVector.unit(0), 1)
    assert not rep.passed and "no step" in rep.caveat


def test_hypercyclic_demo_on_the_root():
    x = FVector.unit(0)
    inst = build_theorem1(theorem1_desk_params(), hypercyclic_injector([x], 1, {2}))
    res = demo_hypercyclic(inst, x, 1, 2)
    s = inst.schedule
    assert res.claimed == mpq(1, 16) + mpq(7, s.a(2))
    assert res.dist < res.claimed
    assert res.c in s.step(2).c
    scaled = build_theorem1(theorem1_desk_params(), hypercyclic_injector([x.scale(5)], 1, {2}))
    assert demo_hypercyclic(scaled, x.scale(5), 1, 2).c == res.c
    with pytest.raises(ValueError):
        demo_hypercyclic(inst, FVector(), 1, 2)


# --------------------------------------------------------------------------
# Hilbert build


@pytest.mark.parametrize("n", [0, 1, 2, 5, 2000])
def test_tail_enclosure_brackets_the_hurwitz_zeta(n):
    lo, hi = _tail_enclosure(n)
    with mpmath.workprec(400):
        exact = mpmath.zeta(2, n + 1)
        assert mpmath.mpf(lo.numerator) / lo.denominator <= exact
        assert exact <= mpmath.mpf(hi.numerator) / hi.denominator
    assert hi - lo < Fraction(1, 10**40)


def test_u0_norm_contains_the_closed_form(hilbert):
    enc = hilbert.u0_norm_enclosure()
    with mpmath.workprec(300):
        want = mpmath.mpf(1) / 2 / mpmath.sqrt(2)
        assert enc.a <= want <= enc.b
        assert enc.b - enc.a < mpmath.mpf(2) ** -200


def test_distance_to_x0_decreases_and_matches_the_tail(hilbert):
    prev = None
    for n in (1, 2):
        enc = hilbert.distance_sq(n)
        with mpmath.workprec(300):
            want = 3 * mpmath.mpf(1) / 4 / mpmath.pi ** 2 * mpmath.zeta(2, n + 1)
            assert abs(mpmath.mpf(enc.a) - want) < mpmath.mpf(2) ** -100
        if prev is not None:
            assert enc.b < prev.a
        prev = enc


def test_t_x0_is_small(hilbert):
    rep = hilbert.t_x0_report()
    assert rep.passed
    assert rep.measured < mpfr(2) ** -700


def test_propnewC_branches(hilbert):
    assert check_propnewC(hilbert, FVector.unit(0)).details["j"] == 0
    excl = check_propnewC(hilbert, hilbert.x0())
    assert excl.passed and excl.details["exclusion"]
    bumped = check_propnewC(hilbert, hilbert.x0() + FVector.unit(1))
    assert bumped.passed and bumped.details["j"] == 1
    with pytest.raises(ValueError):
        check_propnewC(hilbert, FVector())


def test_x0_projects_to_zero_below_a1(hilbert):
    s = hilbert.schedule
    assert q_project(s, hilbert.x0(), 1, s.a(1)).is_zero()


def test_hilbert_alpha_and_u0(hilbert):
    s = hilbert.schedule
    with mpmath.workprec(300):
        want = mpmath.sqrt(3) / 2 / mpmath.pi
        assert abs(mpmath.mpf(str(hilbert.alpha(1))) - want) < mpmath.mpf(2) ** -200
    assert hilbert.u0().support == [s.a(1), s.a(2)]
    assert e_in_f(s, 0) == FVector.unit(0)


def test_hilbert_rejects_bad_epsilon():
    with pytest.raises(InvalidParams):
        build_hilbert(Fraction(3, 2))
