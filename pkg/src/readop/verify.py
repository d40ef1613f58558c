"""Certified inequalities on built truncations and the orbit pipelines."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpfr, mpq

from .basis import FVector, e_in_f, e_to_f, f_to_e, norm
from .errors import (NetMiss, NoLargeCoordinate, OrderingFails, StepNotBuilt, ZeroLeading)
from .operator import (SparseOperator, operator_norm_bound, poly_on_e, power_apply)
from .poly import Polynomial
from .report import CertReport, make_report
from .schedule import Schedule
from .scalars import Scalar, cap, log2_abs, to_scalar

ZERO = mpq(0)
INF = mpfr("inf")


@dataclass
class VerificationConstants:
    """Per-step constants; factorial-tower bases are kept as log2 values."""

    log2_C: dict[int, Scalar] = field(default_factory=dict)
    log2_A: dict[int, Scalar] = field(default_factory=dict)
    log2_D: dict[int, Scalar] = field(default_factory=dict)
    D_instance: dict[int, str] = field(default_factory=dict)
    M: dict[int, Scalar] = field(default_factory=dict)
    log2_delta: dict[int, int] = field(default_factory=dict)

    def base(self, n: int) -> Scalar:
        return self.log2_C.get(n, mpq(1))

    def record_D(self, n: int, value: Scalar, instance: str) -> None:
        if n not in self.log2_D or value > self.log2_D[n]:
            self.log2_D[n] = value
            self.D_instance[n] = instance


def _require_step(schedule: Schedule, n: int, frozen: bool = True) -> None:
    if not 1 <= n <= schedule.n_built:
        raise StepNotBuilt(f"step {n} is not built")
    if frozen and not schedule.step(n).frozen:
        raise StepNotBuilt(f"step {n} has no frozen polynomial net")


# --------------------------------------------------------------------------
# projections applied to vectors


def q_project(schedule: Schedule, x: FVector, n: int, cutoff: int) -> FVector:
    """Q x for the projection with the given cutoff (nu_n, a_n or mu_n).

    Only coordinates of x beyond the cutoff that sit on the next step's
    (a)-indices contribute a correction, so the next step need not be built
    when x lives below it.
    """
    out = x.restrict(0, cutoff)
    st = schedule.step(n)
    # corrections start beyond xi_{n+1}, so nearer coordinates are simply dropped
    extra = [(j, v) for j, v in x.items() if j > st.end]
    if not extra:
        return out
    if n + 1 > schedule.n_built:
        raise StepNotBuilt(f"projection at step {n} needs step {n + 1} for {extra[0][0]}")
    nxt = schedule.step(n + 1)
    for j, v in extra:
        if schedule.variant == "th2":
            if j == nxt.a:
                out = out + e_in_f(schedule, st.a).scale(-v / schedule.alpha(n + 1))
            continue
        for r in range(2, n + 2):
            lo = r * nxt.a
            if lo <= j <= lo + schedule.xis[n + 2 - r]:
                coef = -mpq(schedule.a(n + 1 - r)) / schedule.alpha(r)
                target = j - r * nxt.a + (r - 1) * st.a
                out = out + e_in_f(schedule, target).scale(v * coef)
    return out


def _cutoff(schedule: Schedule, n: int) -> int:
    st = schedule.step(n)
    return st.a if schedule.variant == "th2" else st.mu


# --------------------------------------------------------------------------
# fact b: T^c ~ p(T) on F_nu


def check_fact_b(schedule: Schedule, n: int, *, samples: int = 16, seed: int = 0,
                 exhaustive_limit: int = 1 << 14) -> CertReport:
    """sup ||T^c y - p(T) y|| / ||y|| over y in the e-basis of F_nu and samples."""
    _require_step(schedule, n)
    st = schedule.step(n)
    if st.nu <= exhaustive_limit:
        basis = range(st.nu + 1)
        caveat = ""
    else:
        rng = random.Random(seed)
        picks = {0, 1, st.a, st.nu} | {rng.randrange(st.nu + 1) for _ in range(64)}
        basis = sorted(picks)
        caveat = f"e-basis sampled at {len(basis)} indices"
    worst = ZERO
    worst_at = None
    for t, (ct, p) in enumerate(zip(st.c, st.net), start=1):
        for m in basis:
            diff = e_to_f(schedule, _fact_b_e(ct, p, FVector.unit(m)))
            ratio = norm(schedule, diff) / norm(schedule, e_in_f(schedule, m))
            if ratio > worst:
                worst, worst_at = ratio, (t, m)
        rng = random.Random(seed + t)
        for _ in range(samples):
            ey = FVector({rng.randrange(st.nu + 1): mpq(rng.randint(1, 16), 16) for _ in range(3)})
            y = e_to_f(schedule, ey)
            ny = norm(schedule, y)
            if ny == 0:
                continue
            ratio = norm(schedule, e_to_f(schedule, _fact_b_e(ct, p, ey))) / ny
            if ratio > worst:
                worst, worst_at = ratio, (t, "sample")
    return make_report(f"fact-b.n{n}", "T^c y close to p(T) y on F_nu", st.delta, worst,
                       caveat=caveat, details={"worst": worst_at, "log2_delta": st.log2_delta})


def _fact_b_e(c: int, p: Polynomial, ey: FVector) -> FVector:
    return ey.shift(c) - poly_on_e(p, ey)


def fact_b_ratio(schedule: Schedule, n: int, t: int, y: FVector) -> Scalar:
    """||T^{c_t} y - p_t(T) y|| / ||y|| for one f-vector y (0 for y = 0)."""
    st = schedule.step(n)
    if y.is_zero():
        return ZERO
    ey = f_to_e(schedule, y)
    diff = e_to_f(schedule, _fact_b_e(st.c[t - 1], st.net[t - 1], ey))
    return norm(schedule, diff) / norm(schedule, y)


# --------------------------------------------------------------------------
# tail bound


def tail_operator(schedule: Schedule, n: int, t: int = 1, n_cut: int | None = None) -> SparseOperator:
    """Columns of T^{c_t}(I - Q_nu) for nu_n < j <= n_cut, plus the a_{n+1} column."""
    st = schedule.step(n)
    c = st.c[t - 1]
    top = st.xi_next if n_cut is None else n_cut
    top = min(top, schedule.horizon - c)
    cols: dict[int, FVector] = {}
    for j in range(st.nu + 1, top + 1):
        ex = f_to_e(schedule, FVector.unit(j))
        if ex.max_index() + c > schedule.horizon:
            continue
        cols[j] = e_to_f(schedule, ex.shift(c))
    corr = _next_a_columns(schedule, n)
    for j, ex in corr.items():
        if ex.max_index() + c <= schedule.horizon:
            cols[j] = e_to_f(schedule, ex.shift(c))
    dom = max(cols) if cols else st.nu
    codom = max((v.max_index() for v in cols.values()), default=0)
    return SparseOperator(cols, dom, codom, name=f"T^c(I-Q_nu{n})")


def _next_a_columns(schedule: Schedule, n: int) -> dict[int, FVector]:
    """e-coordinates of (I - Q_nu) f_j on the next step's (a)-indices."""
    out: dict[int, FVector] = {}
    if n + 1 > schedule.n_built:
        return out
    nxt = schedule.step(n + 1)
    if schedule.variant == "th2":
        j = nxt.a
        fe = f_to_e(schedule, FVector.unit(j))
        out[j] = fe - fe.restrict(0, schedule.step(n).nu)
        return out
    for r in range(2, n + 2):
        lo = r * nxt.a
        for j in (lo, lo + schedule.xis[n + 2 - r]):
            fe = f_to_e(schedule, FVector.unit(j))
            out[j] = fe - fe.restrict(0, schedule.step(n).nu)
    return out


def check_tail_bound(schedule: Schedule, n: int, variant: str | None = None,
                     n_cut: int | None = None) -> CertReport:
    """Upper bound of ||T^{c_k}(I - Q_nu)|| on the columns inside the horizon."""
    _require_step(schedule, n)
    variant = variant or schedule.variant
    claimed = mpq(100) if variant == "th2" else mpq(103)
    st = schedule.step(n)
    worst = ZERO
    worst_t = 1
    cut = None
    for t in range(1, st.k + 1):
        op = tail_operator(schedule, n, t, n_cut)
        upper, _ = operator_norm_bound(op, schedule, samples=0)
        cut = op.dom_max
        if upper > worst:
            worst, worst_t = upper, t
    caveat = (f"columns nu_{n} < j <= {cut} and next (a)-indices only; "
              f"columns with j + c beyond the horizon excluded")
    return make_report(f"tail.{variant}.n{n}", "T^c (I - Q_nu) stays bounded",
                       claimed, worst, caveat=caveat, details={"worst_t": worst_t, "cut": cut})


# --------------------------------------------------------------------------
# b-damping and the (b)-fan estimate


def check_b_damping(schedule: Schedule, n: int, *, seed: int = 0,
                    exhaustive_limit: int = 1 << 14) -> CertReport:
    """sup ||(T^b/b - I) T y|| / ||y|| over the e- and f-basis of F_a (F_mu)."""
    _require_step(schedule, n, frozen=False)
    st = schedule.step(n)
    top = _cutoff(schedule, n)
    if top < exhaustive_limit:
        idx = range(top + 1)
        caveat = ""
    else:
        rng = random.Random(seed)
        idx = sorted({0, 1, top - 1, top} | set(range(min(64, top))) | {rng.randrange(top + 1) for _ in range(192)})
        caveat = f"bases sampled at {len(idx)} indices"
    worst = ZERO
    worst_at = None
    for kind in ("e", "f"):
        for m in idx:
            ey = FVector.unit(m) if kind == "e" else f_to_e(schedule, FVector.unit(m))
            y = e_in_f(schedule, m) if kind == "e" else FVector.unit(m)
            ny = norm(schedule, y)
            shifted = ey.shift(1)
            diff = e_to_f(schedule, shifted.shift(st.b).scale(mpq(1, st.b)) - shifted)
            ratio = norm(schedule, diff) / ny
            if ratio > worst:
                worst, worst_at = ratio, f"{kind}_{m}"
    claimed = 1 / gmpy2.sqrt(mpfr(st.b))
    if gmpy2.is_square(st.b):
        claimed = mpq(1, int(gmpy2.isqrt(st.b)))
    return make_report(f"b-damping.n{n}", "(T^b/b - I) T small on F_a", claimed, worst,
                       caveat=caveat, details={"worst": worst_at, "C_prime": worst * st.b})


def b_damping_ratio(schedule: Schedule, n: int, y: FVector) -> Scalar:
    if y.is_zero():
        return ZERO
    st = schedule.step(n)
    shifted = f_to_e(schedule, y).shift(1)
    diff = e_to_f(schedule, shifted.shift(st.b).scale(mpq(1, st.b)) - shifted)
    return norm(schedule, diff) / norm(schedule, y)


def check_prop3(schedule: Schedule, n: int, *, samples: int = 32, seed: int = 0,
                exhaustive_limit: int = 1 << 14) -> CertReport:
    """sup ||T^{b+1} pi_(a, nu] x|| / (b ||x||) over f_j and random x."""
    _require_step(schedule, n, frozen=False)
    st = schedule.step(n)
    lo = _cutoff(schedule, n) + 1
    if st.nu - lo < exhaustive_limit:
        idx = list(range(lo, st.nu + 1))
        caveat = ""
    else:
        rng = random.Random(seed)
        idx = sorted({lo, lo + 1, st.b, st.b + 1, st.nu} | {rng.randrange(lo, st.nu + 1) for _ in range(256)})
        caveat = f"f-basis sampled at {len(idx)} indices"
    worst = ZERO
    worst_at = None
    for j in idx:
        ratio = prop3_ratio(schedule, n, FVector.unit(j))
        if ratio > worst:
            worst, worst_at = ratio, j
    rng = random.Random(seed)
    for _ in range(samples):
        x = FVector({rng.randrange(0, st.nu + 1): mpq(rng.randint(-16, 16), 16) for _ in range(4)})
        ratio = prop3_ratio(schedule, n, x)
        if ratio > worst:
            worst, worst_at = ratio, "sample"
    return make_report(f"prop3.n{n}", "T^(b+1)/b on (a, nu] is of order 1/b", mpq(2, st.b), worst,
                       caveat=caveat, details={"worst": worst_at})


def prop3_ratio(schedule: Schedule, n: int, x: FVector) -> Scalar:
    if x.is_zero():
        return ZERO
    st = schedule.step(n)
    part = x.restrict(_cutoff(schedule, n) + 1, st.nu)
    if part.is_zero():
        return ZERO
    out = power_apply(schedule, st.b + 1, part).scale(mpq(1, st.b))
    return norm(schedule, out) / norm(schedule, x)


# --------------------------------------------------------------------------
# large coordinates


def tower_threshold_log2(top: int, j: int, base_log2: Scalar) -> Scalar:
    """-((top - j + 1)!)^2 * base as an exact big-integer product."""
    f = math.factorial(top - j + 1)
    return -(mpq(f * f) * to_scalar(base_log2))


def exceeds_tower(log2_value: Scalar, top: int, j: int, base_log2: Scalar) -> bool:
    """log2_value >= -((top-j+1)!)^2 * base, growing the factorial only as far as needed."""
    if log2_value == mpfr("-inf"):
        return False
    base = to_scalar(base_log2)
    if base <= 0:
        return log2_value >= 0
    need = -log2_value
    if need <= 0:
        return True
    f = 1
    for k in range(2, top - j + 2):
        f *= k
        if f * f * base >= need:
            return True
    return f * f * base >= need


def find_large_coordinate(schedule: Schedule, x: FVector, n: int, base_log2: Scalar = 1,
                          cutoff: int | None = None) -> int | None:
    """Smallest j <= cutoff whose e-coordinate of Q x clears the factorial threshold."""
    _require_step(schedule, n, frozen=False)
    top = _cutoff(schedule, n)
    cutoff = top - 1 if cutoff is None else cutoff
    ex = f_to_e(schedule, q_project(schedule, x, n, top))
    for j, v in ex.items():
        if j > cutoff:
            break
        if exceeds_tower(log2_abs(v), top, j, base_log2):
            return j
    return None


# --------------------------------------------------------------------------
# polynomial solve


def solve_fact_f(x: FVector, y: FVector, m: int, i_n: int,
                 constants: VerificationConstants | None = None, step: int = 0) -> Polynomial:
    """Polynomial p with p(T_m) x = y on F_m, both given in e-coordinates.

    T_m is the truncated shift e_j -> e_{j+1}, e_m -> 0.  The convolution is
    triangular with diagonal x_{i_n}, so forward substitution solves it.
    """
    lead = x[i_n]
    if lead == 0:
        raise ZeroLeading(f"x has no e_{i_n} coordinate")
    if any(j < i_n or j > m for j in x.support):
        raise ValueError("x must lie in span{e_i_n .. e_m}")
    if any(j < i_n or j > m for j in y.support):
        raise ValueError("y must lie in span{e_i_n .. e_m}")
    xs = [(j - i_n, v) for j, v in x.items() if j != i_n]
    coeffs: dict[int, Scalar] = {}
    if not xs:
        for j, v in y.items():
            coeffs[j - i_n] = v / lead
    else:
        top = m - i_n
        for d in range(top + 1):
            acc = y[i_n + d]
            for off, v in xs:
                if off > d:
                    break
                pd = coeffs.get(d - off)
                if pd is not None:
                    acc = acc - pd * v
            if acc != 0:
                coeffs[d] = cap(acc / lead)
    p = Polynomial(coeffs)
    if constants is not None and not p.is_zero():
        log2_d = log2_abs(p.modulus()) + (m - i_n + 1) * log2_abs(lead)
        constants.record_D(step, log2_d, f"m={m} i={i_n}")
    return p


def truncated_shift_apply(p: Polynomial, x: FVector, m: int) -> FVector:
    """p(T_m) x by repeated application of the truncated shift (oracle route)."""
    out: dict[int, Scalar] = {}
    cur = x
    for d in range(p.degree + 1):
        a = p.coeff(d)
        if a != 0:
            for j, v in cur.items():
                out[j] = out.get(j, ZERO) + a * v
        cur = FVector({j + 1: v for j, v in cur.items() if j + 1 <= m})
    return FVector(out)


# --------------------------------------------------------------------------
# pipelines


@dataclass
class PipelineResult:
    c: int
    dist: Scalar
    j_n: int
    p: Polynomial
    q: Polynomial
    net_index: int
    claimed: Scalar
    target: int
    caveat: str = ""

    def __iter__(self):
        return iter((self.c, self.dist))


def pipeline_polynomial(schedule: Schedule, x: FVector, n: int, target: FVector,
                        cutoff: int | None = None, base_log2: Scalar = 1,
                        constants: VerificationConstants | None = None
                        ) -> tuple[int, Polynomial, Polynomial]:
    """(j_n, p, q) with p(T_top) Q x = target and q = zeta^(b+1) p / b.

    ``target`` is given in e-coordinates.  Works on an open step, which is
    how co-design computes the polynomials before the (c)-part freezes.
    """
    if x.is_zero():
        raise ValueError("the pipeline needs a nonzero vector")
    st = schedule.step(n)
    top = _cutoff(schedule, n)
    cutoff = top - 1 if cutoff is None else cutoff
    j_n = find_large_coordinate(schedule, x, n, base_log2, cutoff)
    if j_n is None:
        raise NoLargeCoordinate(f"no large e-coordinate below {cutoff + 1} at step {n}")
    qx = f_to_e(schedule, q_project(schedule, x, n, top)).restrict(j_n, top)
    p = solve_fact_f(qx, target.restrict(j_n, top), top, j_n, constants, n)
    q = p.shift(st.b + 1).scale(mpq(1, st.b))
    return j_n, p, q


def match_net(schedule: Schedule, n: int, q: Polynomial) -> int:
    """Index t (1-based) of the net element within eps_n of q."""
    st = schedule.step(n)
    best = None
    for t, p in enumerate(st.net, start=1):
        d = (p - q).modulus()
        if d == 0:
            return t
        if log2_abs(d) < st.log2_eps and (best is None or d < best[0]):
            best = (d, t)
    if best is None:
        raise NetMiss(f"no net element of step {n} within eps_{n} of the pipeline polynomial")
    return best[1]


def p3_target(schedule: Schedule, n: int) -> FVector:
    return FVector.unit(schedule.step(n).a - 1)


def p3_polynomials(schedule: Schedule, x: FVector, n: int) -> Polynomial:
    """The net polynomial that the single-interval pipeline needs for x."""
    return pipeline_polynomial(schedule, x, n, p3_target(schedule, n))[2]


def p3_injector(vectors: list[FVector], steps: set[int] | None = None):
    """Co-design hook: add each vector's pipeline polynomial to the step net."""

    def inject(partial: Schedule, n: int) -> list[Polynomial]:
        if steps is not None and n not in steps:
            return []
        out = []
        for x in vectors:
            if x.max_index() <= partial.step(n).nu:
                out.append(p3_polynomials(partial, x, n))
        return out

    return inject


def demo_p3(schedule: Schedule, x: FVector, n: int,
            constants: VerificationConstants | None = None) -> PipelineResult:
    """Run the single-interval pipeline on x and measure ||T^c x - g_0||."""
    _require_step(schedule, n)
    st = schedule.step(n)
    if x.max_index() > st.nu:
        raise ValueError("demo_p3 expects x supported in F_nu")
    j_n, p, q = pipeline_polynomial(schedule, x, n, p3_target(schedule, n), constants=constants)
    t = match_net(schedule, n, q)
    c = st.c[t - 1]
    dist = norm(schedule, power_apply(schedule, c, x) - FVector.unit(0))
    eps = to_scalar(schedule.params.epsilon)
    return PipelineResult(c, dist, j_n, p, q, t, eps + mpq(10, st.a), 0)


def demo_p2_ordering(schedule: Schedule, x: FVector, y: FVector, n: int) -> CertReport:
    """Steer T^c x onto T y, certifying orbit-closure containment at step n."""
    _require_step(schedule, n)
    st = schedule.step(n)
    claimed = mpq(10, st.a)
    if y.is_zero():
        return make_report(f"p2.n{n}", "T^c x approaches T y", claimed, ZERO,
                           caveat="y = 0: containment is trivial")
    top = _cutoff(schedule, n)
    jx = find_large_coordinate(schedule, x, n)
    jy = find_large_coordinate(schedule, y, n)
    if jx is None:
        raise NoLargeCoordinate("x has no large coordinate")
    if jy is not None and jx > jy:
        raise OrderingFails(f"j_n(x) = {jx} > j_n(y) = {jy}")
    target = f_to_e(schedule, q_project(schedule, y, n, top))
    _, p, q = pipeline_polynomial(schedule, x, n, target)
    t = match_net(schedule, n, q)
    c = st.c[t - 1]
    ty = power_apply(schedule, 1, y)
    measured = norm(schedule, power_apply(schedule, c, x) - ty)
    spill = norm(schedule, power_apply(schedule, 1, y - q_project(schedule, y, n, top)))
    return make_report(f"p2.n{n}", "T^c x approaches T y", claimed + spill, measured,
                       caveat="claimed includes ||T(y - Q_a y)||" if spill else "",
                       details={"c": c, "j_x": jx, "j_y": jy})


def p2_injector(pairs: list[tuple[FVector, FVector]]):
    def inject(partial: Schedule, n: int) -> list[Polynomial]:
        out = []
        top = _cutoff(partial, n)
        for x, y in pairs:
            if y.is_zero():
                continue
            target = f_to_e(partial, q_project(partial, y, n, top))
            out.append(pipeline_polynomial(partial, x, n, target)[2])
        return out

    return inject


def orbit_distance(schedule: Schedule, x: FVector, target: FVector, horizon: int,
                   powers: list[int] | None = None) -> tuple[int, Scalar]:
    """Brute-force min over 0 <= c <= horizon of ||T^c x - target||."""
    ex = f_to_e(schedule, x)
    from .errors import HorizonExceeded

    if ex.max_index() + horizon > schedule.horizon:
        raise HorizonExceeded(f"orbit horizon {horizon} passes the built horizon")
    best_c, best = 0, None
    for c in (range(horizon + 1) if powers is None else sorted(set(powers))):
        if c > horizon:
            continue
        d = norm(schedule, e_to_f(schedule, ex.shift(c)) - target)
        if best is None or d < best:
            best_c, best = c, d
    return best_c, best


# --------------------------------------------------------------------------
# projection norm


def q_operator(schedule: Schedule, n: int) -> SparseOperator:
    """Nonzero columns of Q_nu_n as an explicit operator."""
    st = schedule.step(n)
    cols = {j: FVector.unit(j) for j in range(st.nu + 1)}
    if n + 1 <= schedule.n_built:
        nxt = schedule.step(n + 1)
        if schedule.variant == "th2":
            cols[nxt.a] = q_project(schedule, FVector.unit(nxt.a), n, st.nu)
        else:
            for r in range(2, n + 2):
                lo = r * nxt.a
                for j in range(lo, lo + schedule.xis[n + 2 - r] + 1):
                    cols[j] = q_project(schedule, FVector.unit(j), n, st.nu)
    dom = max(cols)
    return SparseOperator(cols, dom, st.nu, name=f"Q_nu{n}")


def check_q_norm(schedule: Schedule, n: int, constants: VerificationConstants | None = None
                 ) -> CertReport:
    """Operator-norm bound of Q_nu; uniform claim for the single build."""
    _require_step(schedule, n, frozen=False)
    if n + 1 > schedule.n_built:
        raise StepNotBuilt(f"Q_nu{n} needs step {n + 1}")
    upper, lower = operator_norm_bound(q_operator(schedule, n), schedule, samples=8)
    if constants is not None:
        constants.M[n] = upper
    if schedule.variant == "th2":
        alphas = [schedule.alpha(k) for k in range(1, schedule.n_built + 1)]
        delta0 = min(alphas)
        eps = to_scalar(schedule.params.epsilon)
        claimed = 1 + (1 + eps) / delta0
        return make_report(f"q-norm.n{n}", "Q_nu uniformly bounded", claimed, upper,
                           details={"lower": lower})
    return make_report(f"q-norm.th1.n{n}", "Q_nu bounded per step", INF, upper,
                       caveat="per-step constant recorded; no uniform claim",
                       details={"lower": lower})
