"""Factorization T = BA through l_p and its structural checks."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction

import gmpy2
import mpmath
from gmpy2 import mpfr, mpq

from .basis import FVector, norm, split_coordinates
from .errors import Eq5Exceeded, InvalidParams, OutOfHorizon
from .operator import SparseOperator, column_Tf, sk_split
from .report import CertReport, make_report
from .scalars import Scalar, pow2, precision, real_pow
from .schedule import AWork, Lp, Schedule, ZSpace

ZERO = mpq(0)
ONE = mpq(1)

# Working precision floor; u_j norms reach 2^130 at desk scale and the
# BA = T residual is certified at 2^-190 absolute.
FACTOR_PRECISION = 512
RESIDUAL_LOG2 = -190
KERNEL_MASS_LOG2 = -100


@dataclass
class Factorization:
    schedule: Schedule
    N: int
    p: Fraction
    q: Fraction
    A: SparseOperator
    B: SparseOperator
    jtilde: list[int]
    u: dict[int, FVector]
    u_norms: dict[int, Scalar]
    scales: dict[int, Scalar]
    weights: dict[int, Scalar]
    eq5_partial: Scalar
    eq5_terms: dict[int, Scalar] = field(default_factory=dict)

    @property
    def min_exponent(self) -> Fraction:
        return min(1 / self.p, 1 / self.q)

    def a_scale(self, j: int) -> Scalar:
        """Diagonal of A: 1 off the nuclear set, ||u_j||^{1/p} on it."""
        return self.scales.get(j, ONE)


def _exponent(p: Fraction, e: Fraction, x: Scalar) -> Scalar:
    if x == 0:
        return ZERO
    return x if e == 1 else real_pow(x, e)


def build_factorization(schedule: Schedule, N: int, p: Fraction | int | None = None) -> Factorization:
    """A: X -> l_p and B: l_p -> X with BA = T on F_N.

    Raises Eq5Exceeded (carrying the factorization) when the EQ5 partial sum
    reaches the schedule's eq5_budget.
    """
    space = schedule.params.space
    if not isinstance(space, Lp):
        raise InvalidParams("the factorization needs an l_p space with 1 < p < inf")
    p = Fraction(space.p if p is None else p)
    if p != Fraction(space.p):
        raise InvalidParams(f"p = {p} differs from the schedule's l_{space.p}")
    if not 1 < p:
        raise InvalidParams("the factorization needs 1 < p < inf")
    if N + 1 >= schedule.horizon:
        raise OutOfHorizon(f"F_{N} does not fit inside horizon {schedule.horizon}")
    q = p / (p - 1)
    with gmpy2.context(gmpy2.get_context(), precision=max(precision(), FACTOR_PRECISION)):
        dec = sk_split(schedule, N, raise_on_budget=False)
        emin = min(1 / p, 1 / q)
        scales: dict[int, Scalar] = {}
        terms: dict[int, Scalar] = {}
        a_cols: dict[int, FVector] = {}
        b_cols: dict[int, FVector] = {}
        for j in range(N + 1):
            if j in dec.nuclear:
                u = dec.nuclear[j]
                s = _exponent(p, 1 / p, dec.nuclear_norms[j])
                scales[j] = s
                terms[j] = 2 * _exponent(p, emin, dec.nuclear_norms[j])
                a_cols[j] = FVector.unit(j, s) if s != 0 else FVector()
                b_cols[j] = u.scale(1 / s) if s != 0 else FVector()
            else:
                a_cols[j] = FVector.unit(j)
                b_cols[j] = FVector.unit(j + 1, dec.weights[j])
        total = sum(terms.values(), ZERO)
    A = SparseOperator(a_cols, N, N, name=f"A_{N}")
    B = SparseOperator(b_cols, N, N + 1, name=f"B_{N}")
    fact = Factorization(schedule, N, p, q, A, B, dec.jtilde, dict(dec.nuclear),
                         dict(dec.nuclear_norms), scales, dict(dec.weights), total, terms)
    budget = schedule.params.eq5_budget
    if total >= mpq(budget.numerator, budget.denominator):
        raise Eq5Exceeded(f"EQ5 partial sum {float(total):.6g} >= budget {budget}", factorization=fact)
    return fact


# --------------------------------------------------------------------------
# BA = T


def ba_residual(fact: Factorization, columns=None) -> tuple[Scalar, int | None]:
    """max_j ||B A f_j - T f_j|| over the given columns (all by default)."""
    s = fact.schedule
    worst, worst_j = ZERO, None
    with gmpy2.context(gmpy2.get_context(), precision=max(precision(), FACTOR_PRECISION)):
        for j in (range(fact.N + 1) if columns is None else columns):
            ba = fact.B.column(j).scale(fact.a_scale(j))
            r = norm(s, ba - column_Tf(s, j))
            if r > worst:
                worst, worst_j = r, j
    return worst, worst_j


def check_ba(fact: Factorization, columns=None) -> CertReport:
    worst, worst_j = ba_residual(fact, columns)
    return make_report(f"factor-ba.N{fact.N}", "BA f_j = T f_j on F_N", pow2(RESIDUAL_LOG2), worst,
                       details={"worst_column": worst_j})


# --------------------------------------------------------------------------
# kernel of B


def allowed_kernel_support(schedule: Schedule) -> set[int]:
    out = {0}
    for n in range(1, schedule.n_built + 1):
        a = schedule.a(n)
        out |= {a - 1, a}
    return out


def _peel(cols: dict[int, FVector]) -> dict[int, FVector]:
    """Drop columns forced to carry a zero coefficient in any kernel vector.

    A row touched by exactly one remaining column pins that column's
    coefficient to zero; repeat until no such row is left.
    """
    live = {j: c for j, c in cols.items() if not c.is_zero()}
    rows: dict[int, set[int]] = {}
    for j, c in live.items():
        for i in c.support:
            rows.setdefault(i, set()).add(j)
    queue = [i for i, js in rows.items() if len(js) == 1]
    while queue:
        i = queue.pop()
        js = rows.get(i)
        if not js or len(js) != 1:
            continue
        (j,) = js
        for k in live.pop(j).support:
            rows[k].discard(j)
            if len(rows[k]) == 1:
                queue.append(k)
    return live


def _to_mp(v: Scalar) -> mpmath.mpf:
    r = mpq(v)
    return mpmath.mpf(int(r.numerator)) / int(r.denominator)


def kernel_basis(fact: Factorization) -> tuple[list[dict[int, mpmath.mpf]], dict]:
    """Numerical kernel of B on F_N: zero columns plus the SVD null space of the peeled core."""
    zero_cols = [j for j, c in fact.B.stored() if c.is_zero()]
    core = _peel({j: c for j, c in fact.B.stored()})
    basis: list[dict[int, mpmath.mpf]] = [{j: mpmath.mpf(1)} for j in zero_cols]
    info = {"zero_columns": zero_cols, "core_size": len(core), "method": "2-norm SVD of the core"}
    if not core:
        return basis, info
    js = sorted(core)
    rows = sorted({i for c in core.values() for i in c.support})
    pos = {i: k for k, i in enumerate(rows)}
    with mpmath.workprec(max(precision(), FACTOR_PRECISION)):
        M = mpmath.zeros(max(len(rows), len(js)), len(js))
        for col, j in enumerate(js):
            for i, v in core[j].items():
                M[pos[i], col] = _to_mp(v)
        scale = max((abs(M[r, c]) for r in range(M.rows) for c in range(M.cols)), default=1)
        _, S, V = mpmath.svd_r(M / scale)
        tol = mpmath.mpf(2) ** (-(max(precision(), FACTOR_PRECISION) // 2))
        smin = min(S[k] for k in range(len(S)))
        info["min_singular"] = smin
        for k in range(len(S)):
            if S[k] <= tol:
                basis.append({js[c]: V[k, c] for c in range(len(js)) if V[k, c] != 0})
    return basis, info


def check_kernel_localization(fact: Factorization, N: int | None = None,
                              candidates=()) -> CertReport:
    """Every kernel vector of B on F_N lives on {0} and the (a_n - 1, a_n) pairs.

    ``candidates`` are extra vectors y; any with By = 0 and mass off the
    allowed set fails the check.
    """
    s = fact.schedule
    allowed = allowed_kernel_support(s)
    basis, info = kernel_basis(fact)
    worst = mpmath.mpf(0)
    for vec in basis:
        tot = mpmath.fsum(abs(v) for v in vec.values())
        off = mpmath.fsum(abs(v) for j, v in vec.items() if j not in allowed)
        worst = max(worst, off / tot)
    bad_candidates = []
    for y in candidates:
        off = [j for j in y.support if j not in allowed]
        if off and apply_B(fact, y).is_zero():
            bad_candidates.append(off[:4])
    measured = mpfr(mpmath.nstr(worst, 40)) if not bad_candidates else mpfr(1)
    info.update(kernel_dimension=len(basis), bad_candidates=bad_candidates,
                allowed=sorted(j for j in allowed if j <= fact.N))
    return make_report(f"factor-kernel.N{fact.N if N is None else N}",
                       "ker B inside span{g_0, g_(a_n - 1), g_(a_n)}",
                       pow2(KERNEL_MASS_LOG2), measured,
                       caveat="linear kernel computed with the 2-norm Gram for every p", details=info)


def apply_B(fact: Factorization, y: FVector) -> FVector:
    out = FVector()
    for j, v in y.items():
        out = out + fact.B.column(j).scale(v)
    return out


# --------------------------------------------------------------------------
# T0 = AB = S2 + K2


def _a_on(fact: Factorization, x: FVector) -> FVector:
    return FVector({j: v * fact.a_scale(j) for j, v in x.items() if j <= fact.N})


def _k2_column(fact: Factorization, j: int) -> FVector:
    """K2 g_j from the explicit formula rather than from T0 - S2."""
    nxt = j + 1
    if j not in fact.scales:
        w = fact.weights[j]
        if nxt in fact.scales:
            return FVector.unit(nxt, w * fact.scales[nxt])
        if nxt > fact.N:
            return FVector()
        return FVector.unit(nxt, w - 1)
    s = fact.scales[j]
    if s == 0:
        return FVector()
    return FVector({i: v * fact.a_scale(i) / s for i, v in fact.u[j].items() if i <= fact.N})


def _a_norm_bound(fact: Factorization) -> Scalar:
    """Upper bound for ||A||: identity off the nuclear set plus the rank-one scaled terms.

    The identity part maps the Z blocks of X into l_p, which costs the
    c0 -> l_p (or l2 -> l_p) comparison constant on the longest block.
    """
    s = fact.schedule
    plain = FVector({j: ONE for j in range(fact.N + 1) if j not in fact.scales})
    _, z = split_coordinates(s, plain)
    longest = max((len(v) for v in z.values()), default=0)
    zexp = 1 / fact.p if s.params.z_space is ZSpace.C0_CANONICAL else max(Fraction(0), 1 / fact.p - Fraction(1, 2))
    zfac = _exponent(fact.p, zexp, mpq(longest)) if longest else ONE
    return max(ONE, zfac) + sum(fact.scales.values(), ZERO)


def split_T0(fact: Factorization) -> CertReport:
    """T0 = AB on l_p split as unit shift S2 plus K2.

    ||S2|| <= 1 holds by structure: each column has at most one unit entry
    and distinct columns hit distinct rows.
    """
    N = fact.N
    with gmpy2.context(gmpy2.get_context(), precision=max(precision(), FACTOR_PRECISION)):
        s2: dict[int, FVector] = {}
        targets: set[int] = set()
        structural = True
        for j in range(N):
            if j not in fact.scales and j + 1 not in fact.scales:
                s2[j] = FVector.unit(j + 1)
        for j, c in s2.items():
            if len(c.support) > 1 or any(abs(v) != 1 for _, v in c.items()) or targets & set(c.support):
                structural = False
            targets |= set(c.support)
        residual = ZERO
        k2_sum = ZERO
        k2_jtilde = ZERO
        for j in range(N + 1):
            t0 = _a_on(fact, fact.B.column(j))
            k2 = _k2_column(fact, j)
            r = (t0 - s2.get(j, FVector()) - k2).max_abs()
            residual = max(residual, r)
            kn = k2.max_abs() if k2.is_zero() else _lp_norm(k2, fact.p)
            k2_sum = k2_sum + kn
            if j in fact.scales:
                k2_jtilde = k2_jtilde + kn
        emin = fact.min_exponent
        a_norm = _a_norm_bound(fact)
        k2_bound = max(mpq(2), a_norm) * sum((_exponent(fact.p, emin, fact.u_norms[j]) for j in fact.scales), ZERO)
    s2_norm = ONE if s2 else ZERO
    if not structural:
        s2_norm = mpq(2)
    passed_residual = residual <= pow2(RESIDUAL_LOG2)
    details = {
        "structural": structural,
        "residual": residual,
        "residual_ok": passed_residual,
        "k2_column_sum": k2_sum,
        "k2_jtilde_sum": k2_jtilde,
        "k2_bound": k2_bound,
        "a_norm_upper": a_norm,
        "shift_columns": len(s2),
    }
    rep = make_report(f"factor-split.N{N}", "T0 = S2 + K2 with ||S2|| <= 1", ONE,
                      s2_norm if passed_residual else mpq(2), details=details,
                      caveat="" if passed_residual else f"reconstruction residual {float(residual):.3g}")
    return rep


def _lp_norm(x: FVector, p: Fraction) -> Scalar:
    total = sum((real_pow(abs(v), p) for _, v in x.items()), ZERO)
    return real_pow(total, 1 / p)


# --------------------------------------------------------------------------
# EQ5 convergence


def eq5_step_contributions(schedule: Schedule, steps=(1, 2), window: int = 64) -> tuple[dict[int, Scalar], str]:
    """Sum of 2 ||u_j||^{min(1/p,1/q)} over the nuclear set of each step.

    Steps beyond the desk truncation are summed over their first ``window``
    nuclear indices only; the caveat names those steps.  Index 0 is counted
    with step 1.
    """
    space = schedule.params.space
    p = Fraction(space.p)
    q = p / (p - 1) if p > 1 else Fraction(0)
    emin = min(1 / p, 1 / q) if p > 1 else Fraction(1)
    out: dict[int, Scalar] = {}
    partial: list[int] = []
    with gmpy2.context(gmpy2.get_context(), precision=max(precision(), FACTOR_PRECISION)):
        for n in steps:
            st = schedule.step(n)
            total = ZERO
            count = 0
            idx = [0] if n == 1 else []
            for j in _nuclear_indices(schedule, n):
                idx.append(j)
            for j in idx:
                if j + 1 > schedule.horizon:
                    continue
                if count >= window and st.end > (1 << 20):
                    partial.append(n)
                    break
                total = total + 2 * _exponent(p, emin, norm(schedule, column_Tf(schedule, j)))
                count += 1
            out[n] = total
    caveat = f"steps {partial} summed over their first {window} nuclear indices" if partial else ""
    return out, caveat


def _nuclear_indices(schedule: Schedule, n: int):
    for iv in schedule.iter_intervals([n]):
        if schedule.variant == "th2" and isinstance(iv, AWork):
            yield from range(iv.left, iv.right + 1)
        elif iv.right >= iv.left and iv.right > 0:
            yield iv.right


def check_eq5(fact: Factorization, steps=(1, 2), window: int = 64) -> CertReport:
    """EQ5 partial sum below budget and the step-to-step ratio below 1/4."""
    s = fact.schedule
    contrib, caveat = eq5_step_contributions(s, steps, window)
    ratios = {}
    worst = ZERO
    ordered = sorted(contrib)
    for a, b in zip(ordered, ordered[1:]):
        r = contrib[b] / contrib[a] if contrib[a] != 0 else mpfr("inf")
        ratios[(a, b)] = r
        worst = max(worst, r)
    budget = s.params.eq5_budget
    below = fact.eq5_partial < mpq(budget.numerator, budget.denominator)
    details = {"contributions": contrib, "ratios": ratios, "eq5_partial": fact.eq5_partial,
               "budget": budget, "below_budget": below}
    rep = make_report(f"factor-eq5.N{fact.N}", "EQ5 step contributions shrink by 4x",
                      mpq(1, 4), worst, caveat=caveat, details=details)
    if not below:
        rep = replace(rep, passed=False)
    return rep


__all__ = [
    "Factorization", "build_factorization", "check_kernel_localization", "split_T0",
    "check_ba", "ba_residual", "check_eq5", "eq5_step_contributions", "kernel_basis",
    "allowed_kernel_support", "apply_B",
]
