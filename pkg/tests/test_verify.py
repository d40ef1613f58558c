from __future__ import annotations

import math
from fractions import Fraction

import pytest
from gmpy2 import mpfr, mpq
from hypothesis import assume, given, settings, strategies as st

from readop.basis import FVector, e_in_f, norm
from readop.errors import OrderingFails, StepNotBuilt, ZeroLeading
from readop.poly import Polynomial
from readop.report import make_report, render_reports
from readop.schedule import build_schedule, desk_params
from readop.verify import (VerificationConstants, b_damping_ratio, check_b_damping, check_fact_b,
                           check_prop3, check_q_norm, demo_p2_ordering, demo_p3, exceeds_tower,
                           find_large_coordinate, orbit_distance, p2_injector, p3_injector,
                           prop3_ratio, solve_fact_f, tail_operator, tower_threshold_log2,
                           truncated_shift_apply)

# --------------------------------------------------------------------------
# forward substitution against a dense rational solve


def dense_solve(x: dict[int, Fraction], y: dict[int, Fraction], m: int, i: int) -> list[Fraction]:
    """Gaussian elimination on the (m-i+1)-square convolution matrix of x."""
    size = m - i + 1
    rows = [[Fraction(0)] * size + [Fraction(y.get(i + r, 0))] for r in range(size)]
    for r in range(size):
        for d in range(r + 1):
            rows[r][d] = Fraction(x.get(i + r - d, 0))
    for col in range(size):
        piv = next(r for r in range(col, size) if rows[r][col] != 0)
        rows[col], rows[piv] = rows[piv], rows[col]
        for r in range(size):
            if r != col and rows[r][col] != 0:
                f = rows[r][col] / rows[col][col]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[col])]
    return [rows[r][size] / rows[r][r] for r in range(size)]


fracs = st.fractions(min_value=-3, max_value=3, max_denominator=12)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=3), st.integers(min_value=0, max_value=5),
       st.lists(fracs, min_size=6, max_size=6), st.lists(fracs, min_size=6, max_size=6))
def test_solve_matches_dense_oracle(i, extra, xs, ys):
    m = i + extra
    assume(xs[0] != 0)
    x = {i + k: xs[k] for k in range(extra + 1) if xs[k] != 0}
    y = {i + k: ys[k] for k in range(extra + 1) if ys[k] != 0}
    xv = FVector({j: mpq(v.numerator, v.denominator) for j, v in x.items()})
    yv = FVector({j: mpq(v.numerator, v.denominator) for j, v in y.items()})
    p = solve_fact_f(xv, yv, m, i)
    want = dense_solve(x, y, m, i)
    assert [Fraction(p.coeff(d)) for d in range(extra + 1)] == want
    assert truncated_shift_apply(p, xv, m) == yv


def test_solve_examples():
    assert solve_fact_f(FVector.unit(0), FVector.unit(6), 7, 0) == Polynomial.monomial(6)
    assert solve_fact_f(FVector.unit(0, 2), FVector.unit(0), 4, 0) == Polynomial([mpq(1, 2)])
    with pytest.raises(ZeroLeading):
        solve_fact_f(FVector.unit(1), FVector.unit(1), 4, 0)


def test_solve_records_the_modulus_constant():
    consts = VerificationConstants()
    p = solve_fact_f(FVector({0: mpq(1, 2), 1: 1}), FVector.unit(2), 2, 0, consts, step=1)
    # only p = 2 z^2 survives the truncation; log2(|p| * (1/2)^3) = 1 - 3
    assert p == Polynomial.monomial(2, 2)
    assert consts.log2_D[1] == -2


# --------------------------------------------------------------------------
# factorial towers


def test_tower_threshold_is_an_exact_product():
    assert tower_threshold_log2(5, 2, 3) == -(math.factorial(4) ** 2) * 3
    assert tower_threshold_log2(16, 0, mpq(1, 2)) == -mpq(math.factorial(17) ** 2, 2)


@given(st.integers(min_value=0, max_value=12), st.integers(min_value=-10**6, max_value=0),
       st.integers(min_value=1, max_value=4))
def test_lazy_tower_comparison_agrees_with_the_product(j, log2_value, base):
    top = 12
    assert exceeds_tower(mpq(log2_value), top, j, base) == (
        log2_value >= tower_threshold_log2(top, j, base))


def test_large_coordinate_examples(desk):
    assert find_large_coordinate(desk, FVector.unit(0), 1) == 0
    # e_16 has no e-coordinate below a_1
    assert find_large_coordinate(desk, e_in_f(desk, 16), 1) is None
    assert find_large_coordinate(desk, FVector(), 1) is None
    assert find_large_coordinate(desk, e_in_f(desk, 7), 1) == 7


def test_unbuilt_step_is_refused(desk_one_step):
    with pytest.raises(StepNotBuilt):
        check_fact_b(desk_one_step, 2)
    with pytest.raises(StepNotBuilt):
        check_q_norm(desk_one_step, 1)


# --------------------------------------------------------------------------
# certified inequalities on the desk build


def test_fact_b_desk(desk):
    rep = check_fact_b(desk, 1)
    assert rep.passed
    assert rep.claimed == mpq(1, 2**16)
    assert rep.measured == mpq(1, 2**24)


def test_prop3_desk(desk):
    rep = check_prop3(desk, 1)
    assert rep.passed and rep.claimed == mpq(2, 256)
    assert prop3_ratio(desk, 1, FVector.unit(3)) == 0
    assert prop3_ratio(desk, 1, FVector()) == 0
    assert prop3_ratio(desk, 1, FVector.unit(17)) <= mpq(2, 256)


def test_b_damping_on_the_root(desk):
    # (T^b / b - I) T e_0 = e_{b+1} / b - e_1 = f_{b+1} / b
    assert b_damping_ratio(desk, 1, FVector.unit(0)) == mpq(1, 256)
    assert b_damping_ratio(desk, 1, FVector()) == 0
    rep = check_b_damping(desk, 1)
    assert rep.passed and rep.claimed == mpq(1, 16)


def test_q_norm_desk(desk):
    rep = check_q_norm(desk, 1)
    # 1 + (1 + 1/2) / (1/4)
    assert rep.claimed == 7
    assert rep.passed
    assert rep.details["lower"] <= rep.measured


def test_tail_column_on_the_next_a_index(desk):
    st1 = desk.step(1)
    a2 = desk.step(2).a
    op = tail_operator(desk, 1, 1, st1.nu + 64)
    col = op.column(a2)
    assert norm(desk, col) == 4 * norm(desk, e_in_f(desk, a2 + st1.c[0]))
    assert norm(desk, col) < mpfr(2) ** -700
    # vectors inside F_nu are annihilated by I - Q_nu
    assert all(j > st1.nu for j in op.columns)


# --------------------------------------------------------------------------
# pipelines


@pytest.fixture(scope="module")
def codesign_root():
    x = FVector.unit(0)
    return x, build_schedule(desk_params(n_max=1), p3_injector([x]))


def test_demo_p3_on_the_root(codesign_root):
    x, s = codesign_root
    res = demo_p3(s, x, 1)
    assert (res.j_n, res.c) == (0, 16448)
    assert res.p == Polynomial.monomial(15)
    assert res.q == Polynomial.monomial(272, mpq(1, 256))
    assert res.dist == mpq(1, 4) + mpq(1, 2**8) + mpq(1, 2**32)
    assert res.dist < res.claimed == mpq(1, 2) + mpq(10, 16)


def test_demo_p3_is_linear_in_scaling(codesign_root):
    x, s = codesign_root
    scaled = demo_p3(build_schedule(desk_params(n_max=1), p3_injector([x.scale(3)])), x.scale(3), 1)
    assert scaled.c == demo_p3(s, x, 1).c


def test_orbit_brute_force_beats_the_pipeline(codesign_root):
    x, s = codesign_root
    res = demo_p3(s, x, 1)
    c, d = orbit_distance(s, x, FVector.unit(0), res.c, powers=[0, res.c])
    assert d <= res.dist


def test_orbit_distance_examples(desk):
    assert orbit_distance(desk, FVector.unit(0), FVector.unit(0), 0) == (0, 0)
    assert orbit_distance(desk, FVector.unit(0), e_in_f(desk, 5), 8) == (5, 0)


def test_p2_ordering():
    x = FVector.unit(0)
    s = build_schedule(desk_params(n_max=1), p2_injector([(x, x)]))
    rep = demo_p2_ordering(s, x, x, 1)
    assert rep.passed and rep.claimed == mpq(10, 16)
    assert demo_p2_ordering(s, x, FVector(), 1).passed
    with pytest.raises(OrderingFails):
        demo_p2_ordering(s, FVector.unit(5), x, 1)


# --------------------------------------------------------------------------
# report plumbing


def test_report_line_and_summary():
    ok = make_report("demo.ok", "anchor", mpq(1), mpq(1, 2))
    bad = make_report("demo.bad", "anchor", mpq(1), mpq(1), strict=True, caveat="edge")
    assert ok.passed and not bad.passed
    text = render_reports([ok, bad])
    assert text.splitlines()[0].endswith(" pass")
    assert text.splitlines()[1].endswith(" fail")
    assert "# total 2 passed 1 failed 1" in text
    assert "caveat=edge" in text
