"""Multi-interval build on infinitely many Z copies, and the Hilbert-space build."""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, replace
from fractions import Fraction

import gmpy2
import mpmath
from gmpy2 import mpfr, mpq
from mpmath import iv

from .basis import FVector, ZCopy, copy_index, e_in_f, f_identity, norm
from .errors import InvalidParams
from .operator import column_Tf, power_apply
from .report import CertReport, make_report
from .schedule import (HilbertHarmonic, Lp, Schedule, ScheduleParams, ZSpace,
                       build_schedule, build_schedule_multi)
from .scalars import Scalar, log2_abs
from .verify import (PipelineResult, find_large_coordinate, match_net, pipeline_polynomial,
                     _require_step)

ZERO = mpq(0)


# --------------------------------------------------------------------------
# multi-interval build


@dataclass
class CopyLayout:
    """d_1 = 1, d_{n+1} = d_n + xi_n + 1 and the (copy, r) <-> index map."""

    schedule: Schedule

    @property
    def d(self) -> list[int]:
        return self.schedule.d

    def index(self, d: int, r: int) -> int:
        return copy_index(self.schedule, d, r)

    def copy_of(self, j: int) -> tuple[int, int]:
        ident = f_identity(self.schedule, j)
        if not isinstance(ident, ZCopy):
            raise ValueError(f"index {j} is not a Z-copy coordinate")
        return ident.d, ident.r


@dataclass
class Theorem1Instance:
    schedule: Schedule
    layout: CopyLayout


def build_theorem1(params: ScheduleParams, inject=None) -> Theorem1Instance:
    sched = build_schedule_multi(params, inject)
    return Theorem1Instance(sched, CopyLayout(sched))


def fact1bis_sides(inst: Theorem1Instance, n: int, N: int) -> tuple[FVector, FVector]:
    """(e_{(n-N) a_n}, (1/a_N) sum_k alpha_k z_k^(d_{N+1}) + e_0) in f-coordinates."""
    s = inst.schedule
    if not 0 <= N < n <= s.n_built:
        raise ValueError("need 0 <= N < n <= built steps")
    lhs = e_in_f(s, (n - N) * s.a(n))
    rhs = FVector.unit(0)
    d = s.d[N + 1]
    for k in range(1, n - N + 1):
        rhs = rhs + FVector.unit(inst.layout.index(d, k), s.alpha(k) / s.a(N))
    return lhs, rhs


def check_fact1bis(inst: Theorem1Instance) -> list[CertReport]:
    """Exact identity and the 1/a_N distance bound for every built n > N >= 1."""
    s = inst.schedule
    reports = []
    for n in range(2, s.n_built + 1):
        for N in range(1, n):
            lhs, rhs = fact1bis_sides(inst, n, N)
            mismatch = norm(s, lhs - rhs)
            reports.append(make_report(f"fact1bis.identity.n{n}.N{N}", "e_(n-N)a_n expansion",
                                       ZERO, mismatch))
            dist = norm(s, lhs - FVector.unit(0))
            reports.append(make_report(f"fact1bis.distance.n{n}.N{N}", "e_(n-N)a_n near e_0",
                                       mpq(1, s.a(N)), dist))
    return reports


def check_copy_shift(inst: Theorem1Instance, per_copy: int = 4) -> CertReport:
    """T z_r^(d) = z_r^(d+1) whenever d + 1 is not a copy boundary d_m."""
    s = inst.schedule
    faults = 0
    tested = 0
    crushed = ZERO
    boundaries = set(s.d[1:])
    for m in range(1, s.n_built + 1):
        for d in sorted({s.d[m], s.d[m] + 1, s.d[m + 1] - 1} if m + 1 < len(s.d) else {s.d[m]}):
            for r in range(1, min(per_copy, s.n_built - m + 1) + 1):
                try:
                    j = inst.layout.index(d, r)
                except Exception:
                    continue
                if j + 1 > s.horizon:
                    continue
                col = column_Tf(s, j)
                tested += 1
                if d + 1 in boundaries:
                    crushed = max(crushed, norm(s, col))
                    continue
                target = inst.layout.index(d + 1, r)
                if col != FVector.unit(target):
                    faults += 1
    return make_report("th1.copy-shift", "T moves each copy to the next", 0, faults,
                       details={"tested": tested, "max_crushed_norm": crushed})


def check_prop6bis(inst: Theorem1Instance, x: FVector, N: int) -> CertReport:
    """Large e-coordinate of Q_mu x below (n-N) a_n at some built n >= N+2."""
    if x.is_zero():
        raise ValueError("x must be nonzero")
    s = inst.schedule
    found = None
    for n in range(N + 2, s.n_built + 1):
        j = find_large_coordinate(s, x, n, cutoff=(n - N) * s.a(n) - 1)
        if j is not None:
            found = (n, j)
            break
    caveat = "" if found else f"no step in [{N + 2}, {s.n_built}] produced a coordinate"
    return make_report(f"prop6bis.N{N}", "large coordinate below (n-N) a_n", 0,
                       0 if found else 1, caveat=caveat, details={"found": found})


def hypercyclic_target(s: Schedule, n: int, N: int) -> FVector:
    return FVector.unit((n - N) * s.a(n) - 1)


def hypercyclic_injector(vectors: list[FVector], N: int, steps: set[int]):
    """Co-design hook for the multi-interval pipeline."""

    def inject(partial: Schedule, n: int):
        if n not in steps:
            return []
        out = []
        for x in vectors:
            out.append(pipeline_polynomial(partial, x, n, hypercyclic_target(partial, n, N),
                                           cutoff=(n - N) * partial.a(n) - 1)[2])
        return out

    return inject


def demo_hypercyclic(inst: Theorem1Instance, x: FVector, N: int, n: int | None = None
                     ) -> PipelineResult:
    """Steer T^c x to within 1/a_N + 7/a_n of e_0 using step n."""
    s = inst.schedule
    n = s.n_built if n is None else n
    _require_step(s, n)
    if x.is_zero():
        raise ValueError("x must be nonzero")
    if x.max_index() > s.step(n).nu:
        raise ValueError("x must be supported in F_nu")
    j_n, p, q = pipeline_polynomial(s, x, n, hypercyclic_target(s, n, N),
                                    cutoff=(n - N) * s.a(n) - 1)
    t = match_net(s, n, q)
    c = s.step(n).c[t - 1]
    dist = norm(s, power_apply(s, c, x) - FVector.unit(0))
    claimed = mpq(1, s.a(N)) + mpq(7, s.a(n))
    caveat = ""
    if s.step(n).log2_gamma < -(1 << 30):
        # the (c)-diagonal 2^log2_gamma is below the float exponent range and reads as 0
        caveat = f"(c)-diagonal term of size 2^{s.step(n).log2_gamma} dropped by underflow"
    return PipelineResult(c, dist, j_n, p, q, t, claimed, 0, caveat)


# --------------------------------------------------------------------------
# Hilbert build


def hilbert_params(epsilon: Fraction = Fraction(1, 2), n_max: int = 2, **changes) -> ScheduleParams:
    return replace(ScheduleParams(space=Lp(Fraction(2)), z_space=ZSpace.L2_SECOND_COPY,
                                  epsilon=Fraction(epsilon), alpha=HilbertHarmonic(),
                                  n_max=n_max), **changes)


def _tail_enclosure(n: int, cut: int = 1000, terms: int = 10) -> tuple[Fraction, Fraction]:
    """Rigorous rational bounds of sum_{j>n} 1/j^2.

    Exact partial sum up to ``cut`` plus the asymptotic expansion of the
    trigamma function at cut+1, whose truncation error is bounded by the
    first omitted term and carries its sign.
    """
    cut = max(cut, n)
    head = sum((Fraction(1, j * j) for j in range(n + 1, cut + 1)), Fraction(0))
    x = Fraction(cut + 1)
    s = 1 / x + 1 / (2 * x * x)
    for k in range(1, terms + 1):
        b = mpmath.bernfrac(2 * k)
        s += Fraction(int(b[0]), int(b[1])) / x ** (2 * k + 1)
    b = mpmath.bernfrac(2 * terms + 2)
    nxt = Fraction(int(b[0]), int(b[1])) / x ** (2 * terms + 3)
    lo, hi = sorted((s, s + nxt))
    return head + lo, head + hi


@contextmanager
def _iv_precision(bits: int):
    saved = iv.prec
    iv.prec = bits
    try:
        yield
    finally:
        iv.prec = saved


def _iv_frac(q: Fraction):
    return iv.mpf(q.numerator) / q.denominator


@dataclass
class HilbertInstance:
    schedule: Schedule
    epsilon: Fraction

    @property
    def n_built(self) -> int:
        return self.schedule.n_built

    def alpha(self, j: int) -> Scalar:
        return self.schedule.alpha(j)

    def u0(self, n: int | None = None) -> FVector:
        """sum_{k<=n} alpha_k z_k with z_k = f_{a_k}."""
        n = self.n_built if n is None else n
        return FVector({self.schedule.a(k): self.alpha(k) for k in range(1, n + 1)})

    def x0(self, n: int | None = None) -> FVector:
        return self.u0(n) + FVector.unit(0)

    def _scale(self):
        eps = _iv_frac(self.epsilon)
        return 3 * eps * eps / (iv.pi * iv.pi)

    def tail_sq(self, n: int):
        """Interval for ||u_0 - u_0^(n)||^2 = (3 eps^2/pi^2) sum_{j>n} 1/j^2."""
        lo, hi = _tail_enclosure(n)
        return self._scale() * iv.mpf([_iv_frac(lo).a, _iv_frac(hi).b])

    def u0_norm_enclosure(self):
        """Interval for ||u_0||: built part plus the enclosed tail."""
        with _iv_precision(256):
            built = self.u0()
            sq = iv.mpf(0)
            for j in built.support:
                v = built[j]
                sq += _iv_sq(v)
            return iv.sqrt(sq + self.tail_sq(self.n_built))

    def distance_sq(self, n: int):
        """||e_{a_n} - x_0||^2: computed built part plus the enclosed tail."""
        with _iv_precision(256):
            diff = e_in_f(self.schedule, self.schedule.a(n)) - self.x0()
            sq = iv.mpf(0)
            for j in diff.support:
                sq += _iv_sq(diff[j])
            return sq + self.tail_sq(self.n_built)

    def t_x0_report(self, n: int | None = None) -> CertReport:
        """||T x_0^(n)|| against 2 ||x_0 - x_0^(n)||, consistent with T x_0 = 0."""
        n = self.n_built if n is None else n
        s = self.schedule
        measured = norm(s, power_apply(s, 1, self.x0(n)))
        with _iv_precision(256):
            bound = 2 * iv.sqrt(self.tail_sq(n))
        claimed = mpfr(str(mpmath.mpf(bound.a)))
        return make_report(f"hilbert.T-x0.n{n}", "T x_0 vanishes in the limit", claimed, measured,
                           caveat="claim uses the operator norm bound 2",
                           details={"log2_measured": log2_abs(measured)})


def _iv_sq(v: Scalar):
    """Tight interval for v^2 from a gmpy2 scalar."""
    if isinstance(v, type(mpq(0))):
        q = iv.mpf(int(v.numerator)) / int(v.denominator)
        return q * q
    m, e = v.as_mantissa_exp()
    # one ulp either side covers the rounding already present in v
    x = iv.mpf([int(m) - 1, int(m) + 1]) * iv.mpf(2) ** int(e)
    return x * x


def build_hilbert(epsilon: Fraction = Fraction(1, 2), n_max: int = 2, inject=None,
                  **changes) -> HilbertInstance:
    if not 0 < Fraction(epsilon) < 1:
        raise InvalidParams("epsilon must lie in (0, 1)")
    params = hilbert_params(epsilon, n_max, **changes)
    return HilbertInstance(build_schedule(params, inject), Fraction(epsilon))


def check_propnewC(inst: HilbertInstance, x: FVector, n: int | None = None,
                   angle_log2: int = -100) -> CertReport:
    """Large coordinate below a_n at some built step, or colinearity with x_0."""
    if x.is_zero():
        raise ValueError("x must be nonzero")
    s = inst.schedule
    steps = range(1, s.n_built + 1) if n is None else [n]
    for m in steps:
        j = find_large_coordinate(s, x, m)
        if j is not None:
            return make_report("hilbert.propnewC", "coordinate or colinear with x_0", 0, 0,
                               details={"step": m, "j": j})
    x0 = inst.x0()
    dot = sum((x[j] * x0[j] for j in set(x.support) | set(x0.support)), ZERO)
    nx, n0 = norm(s, x), norm(s, x0)
    cos = mpfr(dot) / (nx * n0)
    sin = gmpy2.sqrt(max(mpfr(0), 1 - cos * cos))
    colinear = sin == 0 or log2_abs(sin) < angle_log2
    return make_report("hilbert.propnewC", "coordinate or colinear with x_0", 0,
                       0 if colinear else 1,
                       caveat=f"colinear with truncated x_0 (angle below 2^{angle_log2})"
                       if colinear else "no coordinate and not colinear",
                       details={"exclusion": colinear})
