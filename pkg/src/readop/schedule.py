"""Construction parameters and the interval layout of every build step.

Indices are classified arithmetically from a handful of landmarks per step,
so nothing here enumerates the (b)-fan or (c)-fan of a large step unless a
caller explicitly asks for the interval listing.
"""

from __future__ import annotations

import bisect
import itertools
import math
from collections.abc import Callable, Iterable, Iterator, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction

import gmpy2
from gmpy2 import mpfr, mpq

from .errors import (GrowthOverflow, InvalidParams, NetNotFixed, NotInDomain,
                     OutOfHorizon)
from .poly import Polynomial
from .report import CertReport, make_report
from .scalars import Scalar, pow2

DEFAULT_BUDGET = 2**48
MAX_C_INTERVALS = 200_000


# --------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class Lp:
    p: Fraction = Fraction(1)


@dataclass(frozen=True)
class C0:
    pass


class ZSpace(Enum):
    C0_CANONICAL = "c0"
    L2_SECOND_COPY = "l2"


@dataclass(frozen=True)
class Constant:
    value: Fraction


@dataclass(frozen=True)
class HilbertHarmonic:
    pass


@dataclass(frozen=True)
class Grid:
    eps: Fraction
    max_degree: int


@dataclass(frozen=True)
class Targeted:
    polys: tuple[Polynomial, ...] = ()


GROWTH_NAMES = ("a/xi", "b/a", "c1/nu", "c_next/(h*c)", "xi_next/(h*c_last)")


@dataclass(frozen=True)
class ScheduleParams:
    """Everything that determines a build.

    ``growth`` holds the five multiplier floors in the order of
    ``GROWTH_NAMES``.  ``overrides`` pins individual landmarks, e.g.
    ``(("b", 1, 17),)`` forces b_1 = 17.
    """

    space: Lp | C0 = Lp(Fraction(1))
    z_space: ZSpace = ZSpace.C0_CANONICAL
    epsilon: Fraction = Fraction(1, 2)
    alpha: Constant | HilbertHarmonic = Constant(Fraction(1, 4))
    kappa: tuple[int, ...] | None = None
    n_max: int = 2
    growth: tuple[Fraction, ...] = (Fraction(4),) * 5
    net: Grid | Targeted = Targeted()
    h: int = 2
    rho: Fraction = Fraction(1, 2)
    budget: int = DEFAULT_BUDGET
    eq5_budget: Fraction = Fraction(1)
    overrides: tuple[tuple[str, int, int], ...] = ()

    def kappa_of(self, n: int) -> int:
        if n == 0:
            return 0
        if self.kappa is None:
            return n
        if n > len(self.kappa):
            raise InvalidParams(f"kappa list has no entry for step {n}")
        return self.kappa[n - 1]

    def override(self, name: str, n: int) -> int | None:
        for key, step, value in self.overrides:
            if key == name and step == n:
                return value
        return None


def desk_params(**changes) -> ScheduleParams:
    """The default desk configuration (p = 1, Z = c0, eps = 1/2, alpha = 1/4)."""
    return replace(ScheduleParams(), **changes)


def theorem1_desk_params(**changes) -> ScheduleParams:
    """Desk configuration for the multi-interval build (alpha = 1)."""
    return replace(ScheduleParams(alpha=Constant(Fraction(1))), **changes)


def validate_params(params: ScheduleParams, variant: str = "th2") -> None:
    if not 0 < params.epsilon < 1:
        raise InvalidParams("epsilon must lie in (0, 1)")
    if params.n_max < 1:
        raise InvalidParams("n_max must be at least 1")
    if len(params.growth) != 5:
        raise InvalidParams("growth needs five floors")
    if any(g < 2 for g in params.growth):
        raise InvalidParams("growth floors must be >= 2")
    if params.h < 1:
        raise InvalidParams("h must be >= 1")
    if params.rho <= 0:
        raise InvalidParams("rho must be positive")
    if isinstance(params.space, Lp) and params.space.p < 1:
        raise InvalidParams("p must be >= 1")
    if isinstance(params.alpha, Constant):
        v = params.alpha.value
        if variant == "th1":
            if not 0 < v <= 1:
                raise InvalidParams("alpha must lie in (0, 1] for the multi-interval build")
        elif not 0 < v < params.epsilon:
            raise InvalidParams("alpha must lie in (0, epsilon)")
    else:
        if params.z_space is not ZSpace.L2_SECOND_COPY:
            raise InvalidParams("harmonic alpha requires the l2 second copy")
        if variant == "th1":
            raise InvalidParams("harmonic alpha is only defined for the single-interval build")
    if params.kappa is not None:
        prev = 0
        for k in params.kappa:
            if k <= prev:
                raise InvalidParams("kappa must be strictly increasing and positive")
            prev = k
        if len(params.kappa) < params.n_max:
            raise InvalidParams("kappa list shorter than n_max")
    if isinstance(params.net, Grid):
        if params.net.eps <= 0 or params.net.max_degree < 0:
            raise InvalidParams("grid net needs eps > 0 and max_degree >= 0")


# --------------------------------------------------------------------------
# interval descriptors


@dataclass(frozen=True)
class Root:
    n: int = 0
    left: int = 0
    right: int = 0


@dataclass(frozen=True)
class LayOff:
    """Lay-off interval [k+1, k+l].

    ``scale`` is the length used inside the weight exponent: ``l`` for an
    ordinary interval, b_n for the modified ones inside the (b)-fan.
    """

    n: int
    k: int
    l: int
    modified: bool
    scale: int

    @property
    def left(self) -> int:
        return self.k + 1

    @property
    def right(self) -> int:
        return self.k + self.l


@dataclass(frozen=True)
class AWork:
    """(a)-interval; ``r`` is 1 for the single-interval build."""

    n: int
    r: int
    left: int
    right: int


@dataclass(frozen=True)
class BWork:
    n: int
    r: int
    left: int
    right: int


@dataclass(frozen=True)
class CWork:
    """(c)-interval I_s; ``t`` is the 1-based position of the last nonzero s_k."""

    n: int
    s: tuple[int, ...]
    t: int
    left: int
    right: int

    @property
    def weight(self) -> int:
        return sum(self.s)


Interval = Root | LayOff | AWork | BWork | CWork


@dataclass(frozen=True)
class IntervalTag:
    kind: Interval
    j: int
    is_right_endpoint: bool


def interval_kind(iv: Interval) -> str:
    return {Root: "root", LayOff: "layoff", AWork: "a", BWork: "b", CWork: "c"}[type(iv)]


def interval_line(iv: Interval) -> str:
    """Dump line ``n kind left right extra...``."""
    kind = interval_kind(iv)
    head = f"{iv.n} {kind} {iv.left} {iv.right}"
    if isinstance(iv, LayOff):
        return f"{head} l={iv.l} modified={int(iv.modified)} scale={iv.scale}"
    if isinstance(iv, (AWork, BWork)):
        return f"{head} r={iv.r}"
    if isinstance(iv, CWork):
        return f"{head} s={','.join(map(str, iv.s))} t={iv.t}"
    return head


# --------------------------------------------------------------------------
# layouts


@dataclass
class StepLayout:
    """Landmarks of one construction step.

    ``c`` is None while the step is open (the (c)-part not yet frozen); in
    that state only indices up to ``nu`` are defined.
    """

    n: int
    variant: str
    xi: int
    a: int
    b: int
    nu: int
    mu: int
    j_start: int
    l_cap: int
    h: int
    log2_gamma: int
    log2_delta: int
    log2_eps: int
    c: tuple[int, ...] | None = None
    xi_next: int | None = None
    net: tuple[Polynomial, ...] = ()
    c_starts: list[int] = field(default_factory=list, repr=False)
    c_shapes: list[tuple[tuple[int, ...], int]] = field(default_factory=list, repr=False)

    @property
    def frozen(self) -> bool:
        return self.c is not None

    @property
    def k(self) -> int:
        return len(self.c) if self.c is not None else 0

    @property
    def end(self) -> int:
        return self.xi_next if self.xi_next is not None else self.nu

    @property
    def eps(self) -> Scalar:
        return pow2(self.log2_eps)

    @property
    def delta(self) -> Scalar:
        return pow2(self.log2_delta)

    @property
    def gamma(self) -> Scalar:
        return pow2(self.log2_gamma)

    def c_interval_count(self) -> int:
        return len(self.c_starts)

    def intervals(self, xis: Sequence[int] = ()) -> Iterator[Interval]:
        """Yield the tagged intervals tiling [xi+1, end] in order."""
        n = self.n
        if self.variant == "th2":
            yield LayOff(n, self.xi, self.j_start - 1 - self.xi, False, self.j_start - 1 - self.xi)
            yield AWork(n, 1, self.j_start, self.a)
            top = self.a
        else:
            prev_end = self.xi
            for r in range(1, n + 1):
                left = r * self.a
                yield LayOff(n, prev_end, left - 1 - prev_end, False, left - 1 - prev_end)
                right = left + xis[n + 1 - r]
                yield AWork(n, r, left, right)
                prev_end = right
            top = self.mu
        b = self.b
        yield LayOff(n, top, b - top, True, b)
        for r in range(1, top + 1):
            left = r * (b + 1)
            right = r * b + top
            yield BWork(n, r, left, right)
            if r < top:
                yield LayOff(n, right, (r + 1) * (b + 1) - 1 - right, True, b)
        if not self.frozen:
            return
        prev = self.nu
        for start, (s, t) in zip(self.c_starts, self.c_shapes):
            yield LayOff(n, prev, start - 1 - prev, False, start - 1 - prev)
            yield CWork(n, s, t, start, start + self.nu)
            prev = start + self.nu
        yield LayOff(n, prev, self.xi_next - prev, False, self.xi_next - prev)


def _roundup16(x: int) -> int:
    return -(-x // 16) * 16


def _ceil(x: Fraction | int) -> int:
    return math.ceil(Fraction(x))


def _square16(x: int) -> int:
    """Smallest square of a multiple of 16 that is >= x."""
    root = gmpy2.isqrt(x - 1) + 1 if x > 0 else 0
    return int(_roundup16(int(root))) ** 2


class Schedule:
    """Immutable collection of step layouts plus derived lookup helpers."""

    def __init__(self, params: ScheduleParams, variant: str, steps: list[StepLayout]):
        self.params = params
        self.variant = variant
        self.steps = steps
        self._ends = [s.end for s in steps]
        # xis[m] = xi_m with xi_0 = xi_1 = 0
        self.xis = [0] + [s.xi for s in steps] + ([steps[-1].xi_next] if steps[-1].frozen else [])
        self.d = [0, 1]
        for m in range(1, len(self.xis)):
            self.d.append(self.d[-1] + self.xis[m] + 1)
        self.cache: dict = {}

    # -- landmarks --------------------------------------------------------

    @property
    def n_built(self) -> int:
        return len(self.steps)

    @property
    def horizon(self) -> int:
        return self.steps[-1].end

    def step(self, n: int) -> StepLayout:
        if not 1 <= n <= len(self.steps):
            from .errors import StepNotBuilt

            raise StepNotBuilt(f"step {n} is not built")
        return self.steps[n - 1]

    def a(self, n: int) -> int:
        """a_n with the conventions a_0 = 0 (single) or 1 (multi)."""
        if n == 0:
            return 0 if self.variant == "th2" else 1
        return self.step(n).a

    def alpha(self, n: int) -> Scalar:
        rule = self.params.alpha
        if isinstance(rule, Constant):
            return mpq(rule.value.numerator, rule.value.denominator)
        eps = mpq(self.params.epsilon.numerator, self.params.epsilon.denominator)
        return gmpy2.sqrt(mpfr(3)) * eps / (gmpy2.const_pi() * n)

    def kappa(self, n: int) -> int:
        return self.params.kappa_of(n)

    def step_of(self, j: int) -> int:
        if j < 0:
            raise OutOfHorizon(f"negative index {j}")
        if j > self.horizon:
            if not self.steps[-1].frozen:
                raise NetNotFixed(f"index {j} lies past nu of open step {len(self.steps)}")
            raise OutOfHorizon(f"index {j} beyond horizon {self.horizon}")
        return bisect.bisect_left(self._ends, j) + 1

    # -- classification ---------------------------------------------------

    def classify(self, j: int) -> IntervalTag:
        if j == 0:
            return IntervalTag(Root(), 0, True)
        st = self.steps[self.step_of(j) - 1]
        iv = self._classify_in_step(st, j)
        return IntervalTag(iv, j, j == iv.right)

    def _classify_in_step(self, st: StepLayout, j: int) -> Interval:
        n, b = st.n, st.b
        if st.variant == "th2":
            if j < st.j_start:
                return LayOff(n, st.xi, st.j_start - 1 - st.xi, False, st.j_start - 1 - st.xi)
            if j <= st.a:
                return AWork(n, 1, st.j_start, st.a)
            top = st.a
        else:
            if j < st.a:
                return LayOff(n, st.xi, st.a - 1 - st.xi, False, st.a - 1 - st.xi)
            if j <= st.mu:
                r, off = divmod(j, st.a)
                right = r * st.a + self.xis[n + 1 - r]
                if off <= self.xis[n + 1 - r]:
                    return AWork(n, r, r * st.a, right)
                return LayOff(n, right, (r + 1) * st.a - 1 - right, False,
                              (r + 1) * st.a - 1 - right)
            top = st.mu
        if j <= b:
            return LayOff(n, top, b - top, True, b)
        if j <= st.nu:
            r, i = divmod(j, b + 1)
            if i <= top - r:
                return BWork(n, r, r * (b + 1), r * b + top)
            k = r * b + top
            return LayOff(n, k, (r + 1) * (b + 1) - 1 - k, True, b)
        if not st.frozen:
            raise NetNotFixed(f"index {j} lies in the (c)-part of open step {n}")
        pos = bisect.bisect_right(st.c_starts, j) - 1
        if pos >= 0 and j <= st.c_starts[pos] + st.nu:
            s, t = st.c_shapes[pos]
            start = st.c_starts[pos]
            return CWork(n, s, t, start, start + st.nu)
        left = st.c_starts[pos] + st.nu + 1 if pos >= 0 else st.nu + 1
        right = st.c_starts[pos + 1] - 1 if pos + 1 < len(st.c_starts) else st.xi_next
        return LayOff(n, left - 1, right - left + 1, False, right - left + 1)

    # -- removed (a)-indices --------------------------------------------

    def a_ranges(self, n: int) -> list[tuple[int, int]]:
        """(a)-intervals of step n as (left, right) pairs."""
        st = self.step(n)
        if self.variant == "th2":
            return [(st.j_start, st.a)]
        return [(r * st.a, r * st.a + self.xis[n + 1 - r]) for r in range(1, n + 1)]

    def in_a_part(self, j: int) -> bool:
        if j == 0:
            return False
        n = self.step_of(j)
        return any(lo <= j <= hi for lo, hi in self.a_ranges(n))

    def sigma(self, j: int) -> int:
        if j == 0:
            return 0
        n_j = self.step_of(j)
        removed = 0
        for m in range(1, n_j + 1):
            for lo, hi in self.a_ranges(m):
                if lo <= j <= hi:
                    raise NotInDomain(f"index {j} lies in an (a)-interval")
                if lo < j:
                    removed += min(hi, j - 1) - lo + 1
        return j - removed

    # -- dump ---------------------------------------------------------

    def iter_intervals(self, steps: Iterable[int] | None = None) -> Iterator[Interval]:
        for st in self.steps:
            if steps is None or st.n in steps:
                yield from st.intervals(self.xis)

    def dump(self, steps: Iterable[int] | None = None) -> str:
        lines = [f"# variant {self.variant}"]
        for st in self.steps:
            if steps is not None and st.n not in steps:
                continue
            c = ",".join(map(str, st.c)) if st.c is not None else "-"
            lines.append(
                f"# step {st.n} xi={st.xi} a={st.a} b={st.b} nu={st.nu} mu={st.mu} c={c} "
                f"xi_next={st.xi_next} h={st.h} k={st.k} l={st.l_cap} "
                f"log2_gamma={st.log2_gamma} log2_delta={st.log2_delta} log2_eps={st.log2_eps}")
            for p in st.net:
                lines.append(f"# net {st.n} {p.to_text()}")
        for iv in self.iter_intervals(steps):
            lines.append(interval_line(iv))
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# building


Injector = Callable[[Schedule, int], Sequence[Polynomial]]


def default_net_polynomial(st: StepLayout) -> Polynomial:
    """Pipeline polynomial for the root vector, used when no net is supplied."""
    if st.variant == "th2":
        return Polynomial.monomial(st.b + st.a, mpq(1, st.b))
    shift = max(1, st.n - 1) * st.a
    return Polynomial.monomial(st.b + shift, mpq(1, st.b))


def grid_net(eps: Fraction, degree: int, budget: int = 10**6) -> list[Polynomial]:
    """Coefficient lattice of spacing eps/(degree+1) inside the radius-2 ball.

    Truncating each coefficient of a target toward zero lands on a lattice
    point that stays in the ball and moves the target by less than eps.
    """
    dim = degree + 1
    spacing = Fraction(eps) / dim
    radius = int(Fraction(2) / spacing)
    count_est = (2 * radius + 1) ** dim
    if count_est > budget and _ball_count(dim, radius) > budget:
        from .errors import NetTooLarge

        raise NetTooLarge(f"grid net with {dim} coefficients and radius {radius} is too large")
    out = []
    for pt in _ball_points(dim, radius):
        coeffs = [mpq(v * spacing.numerator, spacing.denominator) for v in pt]
        out.append(Polynomial(coeffs))
    return out


def _ball_count(dim: int, radius: int) -> int:
    """Number of integer points with l1 norm <= radius in dimension dim."""
    return sum(math.comb(dim, k) * math.comb(radius, k) * 2**k for k in range(min(dim, radius) + 1))


def _ball_points(dim: int, radius: int) -> Iterator[tuple[int, ...]]:
    if dim == 0:
        yield ()
        return
    for v in range(-radius, radius + 1):
        for rest in _ball_points(dim - 1, radius - abs(v)):
            yield (v,) + rest


def _check_budget(params: ScheduleParams, name: str, value: int) -> int:
    if value > params.budget:
        raise GrowthOverflow(f"{name} = {value} exceeds the index budget {params.budget}")
    return value


def _open_step(params: ScheduleParams, variant: str, n: int, xi: int) -> StepLayout:
    g = params.growth
    dk = params.kappa_of(n) - params.kappa_of(n - 1) if variant == "th2" else 1
    a = params.override("a", n)
    if a is None:
        a = _roundup16(max(_ceil(g[0] * xi), xi + dk + 1))
    if a <= xi + dk:
        raise InvalidParams(f"a_{n} = {a} leaves no lay-off after xi_{n}")
    _check_budget(params, f"a_{n}", a)
    mu = n * a if variant == "th1" else a
    top = mu
    b = params.override("b", n)
    if b is None:
        b = _square16(_ceil(g[1] * top))
    if b <= top:
        raise InvalidParams(f"b_{n} = {b} must exceed {top}")
    _check_budget(params, f"b_{n}", b)
    nu = _check_budget(params, f"nu_{n}", top * (b + 1))
    l_cap = b + a + 1 if variant == "th2" else nu - 1
    log2_gamma = -(int(gmpy2.isqrt(nu)) // 2)
    return StepLayout(
        n=n, variant=variant, xi=xi, a=a, b=b, nu=nu, mu=mu,
        j_start=a - dk + 1 if variant == "th2" else a,
        l_cap=l_cap, h=params.h, log2_gamma=log2_gamma, log2_delta=log2_gamma + 16,
        log2_eps=-2 * nu - 1)


def _freeze_step(params: ScheduleParams, st: StepLayout, net: Sequence[Polynomial]) -> None:
    g = params.growth
    two = mpq(2)
    for p in net:
        if p.modulus() > two:
            raise InvalidParams(f"net polynomial with modulus {p.modulus()} > 2 at step {st.n}")
        if p.degree > st.l_cap:
            raise InvalidParams(f"net polynomial of degree {p.degree} > {st.l_cap} at step {st.n}")
    k = len(net)
    if k == 0:
        raise InvalidParams(f"empty polynomial net at step {st.n}")
    if (st.h + 1) ** k - 1 > MAX_C_INTERVALS:
        raise InvalidParams(f"{(st.h + 1) ** k - 1} (c)-intervals at step {st.n} is too many")
    c = [_roundup16(max(_ceil(g[2] * st.nu), st.nu + 2))]
    _check_budget(params, f"c_1,{st.n}", c[0])
    for i in range(1, k):
        c.append(_check_budget(params, f"c_{i + 1},{st.n}", _roundup16(_ceil(g[3] * st.h * c[-1]))))
    xi_next = params.override("xi", st.n + 1)
    if xi_next is None:
        xi_next = _roundup16(_ceil(g[4] * st.h * c[-1]))
    _check_budget(params, f"xi_{st.n + 1}", xi_next)
    shapes = []
    for s in itertools.product(range(st.h + 1), repeat=k):
        if any(s):
            t = max(i for i, v in enumerate(s) if v) + 1
            shapes.append((sum(v * ci for v, ci in zip(s, c)), s, t))
    shapes.sort()
    prev_end = st.nu
    for start, s, _ in shapes:
        if start <= prev_end + 1:
            raise InvalidParams(f"(c)-interval at {start} overlaps or touches its predecessor; "
                                "raise the c-growth floors")
        prev_end = start + st.nu
    if prev_end >= xi_next:
        raise InvalidParams(f"xi_{st.n + 1} = {xi_next} does not clear the (c)-fan")
    st.c = tuple(c)
    st.xi_next = xi_next
    st.net = tuple(net)
    st.c_starts = [x[0] for x in shapes]
    st.c_shapes = [(x[1], x[2]) for x in shapes]


def _base_net(params: ScheduleParams, st: StepLayout) -> list[Polynomial]:
    if isinstance(params.net, Grid):
        if params.net.max_degree > st.l_cap:
            raise InvalidParams("grid degree exceeds the step degree cap")
        return grid_net(params.net.eps, params.net.max_degree)
    return list(params.net.polys)


def _build(params: ScheduleParams, variant: str, inject: Injector | None) -> Schedule:
    validate_params(params, variant)
    steps: list[StepLayout] = []
    xi = 0
    for n in range(1, params.n_max + 1):
        if n > 1 and params.override("xi", n) is not None:
            xi = params.override("xi", n)
        st = _open_step(params, variant, n, xi)
        steps.append(st)
        net = _base_net(params, st)
        if inject is not None:
            partial = Schedule(params, variant, list(steps))
            for p in inject(partial, n):
                if p not in net:
                    net.append(p)
        if not net:
            net = [default_net_polynomial(st)]
        _freeze_step(params, st, net)
        xi = st.xi_next
    return Schedule(params, variant, steps)


def build_schedule(params: ScheduleParams, inject: Injector | None = None) -> Schedule:
    """Single-(a)-interval layout for steps 1..n_max.

    ``inject(partial, n)`` is called once the (a)/(b)-parts of step n are
    fixed and may return extra net polynomials before the (c)-part freezes.
    """
    return _build(params, "th2", inject)


def build_schedule_multi(params: ScheduleParams, inject: Injector | None = None) -> Schedule:
    """Multi-(a)-interval layout; ``schedule.d`` holds d_1, d_2, ... at d[1:]."""
    return _build(params, "th1", inject)


def classify_index(schedule: Schedule, j: int) -> IntervalTag:
    return schedule.classify(j)


def sigma(schedule: Schedule, j: int) -> int:
    return schedule.sigma(j)


# --------------------------------------------------------------------------
# validation


VALIDATION_CHECKS = ("growth-floors", "tiling", "a-isolation", "b-damping",
                     "eps-representable", "shade-height")


def _log2(x: int) -> mpfr:
    return gmpy2.log2(mpfr(x))


def validate_schedule(schedule: Schedule, checks: Iterable[str] | str = "all",
                      scan_limit: int = 1 << 18) -> list[CertReport]:
    """Evaluate the schedule-only inequalities, one report per check and step."""
    if checks == "all":
        selected = list(VALIDATION_CHECKS)
    else:
        selected = [c for c in checks]
        unknown = set(selected) - set(VALIDATION_CHECKS)
        if unknown:
            raise InvalidParams(f"unknown validation checks: {sorted(unknown)}")
    reports = []
    for st in schedule.steps:
        for name in selected:
            reports.append(_VALIDATORS[name](schedule, st, scan_limit))
    return reports


def _v_growth(schedule: Schedule, st: StepLayout, _limit: int) -> CertReport:
    g = schedule.params.growth
    top = st.mu
    ratios = [Fraction(st.a, max(st.xi, 1)) if st.xi else None, Fraction(st.b, top)]
    if st.frozen:
        ratios.append(Fraction(st.c[0], st.nu))
        ratios.extend(Fraction(st.c[i + 1], st.h * st.c[i]) for i in range(st.k - 1))
        ratios.append(Fraction(st.xi_next, st.h * st.c[-1]))
    worst = max((Fraction(gi) / r for gi, r in zip(g, ratios) if r is not None), default=Fraction(0))
    overridden = any(step == st.n for _, step, _ in schedule.params.overrides)
    return make_report(f"schedule.growth-floors.n{st.n}", "landmark growth floors",
                       mpq(1), mpq(worst.numerator, worst.denominator),
                       caveat="landmark override in effect" if overridden else "",
                       details={"ratios": [str(r) for r in ratios]})


def _v_tiling(schedule: Schedule, st: StepLayout, limit: int) -> CertReport:
    faults = 0
    expect = st.xi + 1
    count = 0
    for iv in st.intervals(schedule.xis):
        if iv.left != expect or iv.right < iv.left:
            faults += 1
        expect = iv.right + 1
        count += 1
    if expect != st.end + 1:
        faults += 1
    scanned = st.end - st.xi <= limit
    if scanned:
        it = st.intervals(schedule.xis)
        cur = next(it)
        for j in range(st.xi + 1, st.end + 1):
            while j > cur.right:
                cur = next(it)
            if schedule.classify(j).kind != cur:
                faults += 1
    caveat = "" if scanned else "per-index scan skipped; interval adjacency checked"
    return make_report(f"schedule.tiling.n{st.n}", "intervals tile the step range",
                       0, faults, caveat=caveat, details={"intervals": count})


def _v_a_isolation(schedule: Schedule, st: StepLayout, _limit: int) -> CertReport:
    dk = st.a - st.j_start + 1 if st.variant == "th2" else 1
    measured = dk * _log2(st.a) - gmpy2.sqrt(mpfr(st.a)) / 2
    return make_report(f"schedule.a-isolation.n{st.n}",
                       "a^(dk) 2^(-sqrt(a)/2) < 2^-n", mpfr(-st.n), measured,
                       strict=True, scale="log2")


def _v_b_damping(schedule: Schedule, st: StepLayout, _limit: int) -> CertReport:
    top = st.mu
    measured = top * _log2(st.b) - gmpy2.sqrt(mpfr(st.b)) / 2
    return make_report(f"schedule.b-damping.n{st.n}",
                       "b^a 2^(-sqrt(b)/2) < 2^-n", mpfr(-st.n), measured,
                       strict=True, scale="log2")


def _v_eps(schedule: Schedule, st: StepLayout, _limit: int) -> CertReport:
    return make_report(f"schedule.eps-representable.n{st.n}", "eps_n < 4^-nu_n",
                       -2 * st.nu, st.log2_eps, strict=True, scale="log2")


def _v_shade(schedule: Schedule, st: StepLayout, _limit: int) -> CertReport:
    # The top shade of a (c)-fan is damped by gamma 4^(h-1) against the largest
    # e_m with m <= nu; the longest (b)-chain dominates that norm.
    top = st.mu
    log2_emax = top * _log2(st.b) - gmpy2.sqrt(mpfr(st.b)) / 2 + 1
    needed = int(gmpy2.ceil((-st.log2_gamma + max(log2_emax, mpfr(0)) + 1) / 2)) + 1
    return make_report(f"schedule.shade-height.n{st.n}", "gamma 4^(h-1) dominates sup |e_m|",
                       st.h, needed, caveat="needed height from the (b)-chain norm estimate",
                       details={"h_needed": needed})


_VALIDATORS = {
    "growth-floors": _v_growth,
    "tiling": _v_tiling,
    "a-isolation": _v_a_isolation,
    "b-damping": _v_b_damping,
    "eps-representable": _v_eps,
    "shade-height": _v_shade,
}


# --------------------------------------------------------------------------
# config files


def _frac(text: str) -> Fraction:
    return Fraction(text.strip())


def parse_params(text: str) -> ScheduleParams:
    """Parse the ``key = value`` config format."""
    from .errors import ParseError

    fields: dict[str, object] = {}
    overrides = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key == "space":
                fields["space"] = C0() if value == "c0" else Lp(_frac(value.removeprefix("l")))
            elif key == "z_space":
                fields["z_space"] = ZSpace(value)
            elif key == "epsilon":
                fields["epsilon"] = _frac(value)
            elif key == "alpha":
                fields["alpha"] = HilbertHarmonic() if value == "harmonic" else Constant(_frac(value))
            elif key == "kappa":
                fields["kappa"] = tuple(int(v) for v in value.split(","))
            elif key == "n_max":
                fields["n_max"] = int(value)
            elif key == "growth":
                vals = [_frac(v) for v in value.split(",")]
                fields["growth"] = tuple(vals * 5 if len(vals) == 1 else vals)
            elif key == "net":
                if value.startswith("grid"):
                    _, eps, deg = value.split(":")
                    fields["net"] = Grid(_frac(eps), int(deg))
                elif value == "targeted":
                    fields["net"] = Targeted()
                else:
                    raise ValueError(value)
            elif key == "net_poly":
                prev = fields.get("net", Targeted())
                polys = prev.polys if isinstance(prev, Targeted) else ()
                fields["net"] = Targeted(polys + (Polynomial.from_text(value),))
            elif key == "h":
                fields["h"] = int(value)
            elif key == "rho":
                fields["rho"] = _frac(value)
            elif key == "eq5_budget":
                fields["eq5_budget"] = _frac(value)
            elif key == "budget":
                fields["budget"] = int(eval_power(value))
            elif key.startswith("override."):
                _, name, step = key.split(".")
                overrides.append((name, int(step), int(value)))
            else:
                raise ParseError(f"line {lineno}: unknown key {key!r}")
        except ParseError:
            raise
        except (ValueError, ZeroDivisionError) as exc:
            raise ParseError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    if overrides:
        fields["overrides"] = tuple(overrides)
    return ScheduleParams(**fields)


def eval_power(text: str) -> int:
    """Integers written plainly or as ``base^exp``."""
    if "^" in text:
        base, exp = text.split("^", 1)
        return int(base) ** int(exp)
    return int(text)


def params_to_text(params: ScheduleParams) -> str:
    lines = []
    sp = params.space
    lines.append("space = c0" if isinstance(sp, C0) else f"space = {sp.p}")
    lines.append(f"z_space = {params.z_space.value}")
    lines.append(f"epsilon = {params.epsilon}")
    al = params.alpha
    lines.append("alpha = harmonic" if isinstance(al, HilbertHarmonic) else f"alpha = {al.value}")
    if params.kappa is not None:
        lines.append("kappa = " + ",".join(map(str, params.kappa)))
    lines.append(f"n_max = {params.n_max}")
    lines.append("growth = " + ",".join(str(g) for g in params.growth))
    if isinstance(params.net, Grid):
        lines.append(f"net = grid:{params.net.eps}:{params.net.max_degree}")
    else:
        lines.append("net = targeted")
        for p in params.net.polys:
            lines.append(f"net_poly = {p.to_text()}")
    lines.append(f"h = {params.h}")
    lines.append(f"rho = {params.rho}")
    lines.append(f"budget = {params.budget}")
    lines.append(f"eq5_budget = {params.eq5_budget}")
    for name, step, value in params.overrides:
        lines.append(f"override.{name}.{step} = {value}")
    return "\n".join(lines) + "\n"
