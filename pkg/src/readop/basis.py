"""The f/e basis atlas: identities of f_j, lay-off weights, change of basis, norms.

Every e_j is defined by a one-step rule ``e_j = diag_j * f_j + sum_k r_k e_k``
with all ``k < j``.  Converting an e-combination to f-coordinates therefore
peels the largest index first; the back-references are pushed onto a heap
and merged, so long (b)-chains cost time linear in their length and exact
cancellations (e.g. ``e_{j+1} - b e_{j+1-b} = f_{j+1}``) stop the peel early.
"""

from __future__ import annotations

import heapq
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
from gmpy2 import mpfr, mpq

from .errors import NotLayOff, OutOfHorizon, ParseError
from .schedule import AWork, BWork, C0, CWork, LayOff, Root, Schedule, ZSpace
from .scalars import Scalar, cap, format_scalar, is_exact, parse_scalar, pow2, real_pow, to_scalar

E_MEMO_CAP = 1 << 18
ZERO = mpq(0)
ONE = mpq(1)


# --------------------------------------------------------------------------
# sparse vectors


class FVector:
    """Finitely supported coefficient vector; zero coefficients are never stored.

    The same container holds e-coordinates where a function says so.
    """

    __slots__ = ("_c",)

    def __init__(self, coeffs: Mapping[int, object] | Iterable[tuple[int, object]] = ()):
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        c: dict[int, Scalar] = {}
        for j, v in items:
            if j < 0:
                raise ValueError("negative index")
            s = to_scalar(v)
            if s != 0:
                c[int(j)] = s
        self._c = c

    @classmethod
    def _raw(cls, c: dict[int, Scalar]) -> FVector:
        out = cls.__new__(cls)
        out._c = {j: v for j, v in c.items() if v != 0}
        return out

    @classmethod
    def unit(cls, j: int, value: object = 1) -> FVector:
        return cls({j: value})

    @property
    def support(self) -> list[int]:
        return sorted(self._c)

    def items(self) -> list[tuple[int, Scalar]]:
        return sorted(self._c.items())

    def __getitem__(self, j: int) -> Scalar:
        return self._c.get(j, ZERO)

    def __len__(self) -> int:
        return len(self._c)

    def __iter__(self) -> Iterator[int]:
        return iter(self.support)

    def max_index(self) -> int:
        return max(self._c) if self._c else -1

    def is_zero(self) -> bool:
        return not self._c

    def is_exact(self) -> bool:
        return all(is_exact(v) for v in self._c.values())

    def __add__(self, other: FVector) -> FVector:
        out = dict(self._c)
        for j, v in other._c.items():
            out[j] = cap(out[j] + v) if j in out else v
        return FVector._raw(out)

    def __sub__(self, other: FVector) -> FVector:
        return self + other.scale(-1)

    def __neg__(self) -> FVector:
        return self.scale(-1)

    def scale(self, factor: object) -> FVector:
        f = to_scalar(factor)
        if f == 0:
            return FVector()
        return FVector._raw({j: cap(v * f) for j, v in self._c.items()})

    def __mul__(self, factor: object) -> FVector:
        return self.scale(factor)

    __rmul__ = __mul__

    def shift(self, k: int) -> FVector:
        return FVector._raw({j + k: v for j, v in self._c.items()})

    def restrict(self, lo: int, hi: int) -> FVector:
        return FVector._raw({j: v for j, v in self._c.items() if lo <= j <= hi})

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FVector) and self._c == other._c

    def __hash__(self) -> int:
        return hash(self.to_text())

    def __repr__(self) -> str:
        body = ", ".join(f"{j}: {format_scalar(v)}" for j, v in self.items()[:8])
        more = ", ..." if len(self._c) > 8 else ""
        return f"FVector({{{body}{more}}})"

    def max_abs(self) -> Scalar:
        return max((abs(v) for v in self._c.values()), default=ZERO)

    def to_text(self) -> str:
        """``index value`` lines with bit-exact values."""
        return "".join(f"{j} {format_scalar(v)}\n" for j, v in self.items())

    @classmethod
    def from_text(cls, text: str) -> FVector:
        out: dict[int, Scalar] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"line {lineno}: expected 'index value'")
            try:
                j = int(parts[0])
                v = parse_scalar(parts[1])
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from exc
            if j < 0:
                raise ParseError(f"line {lineno}: negative index")
            out[j] = out.get(j, ZERO) + v
        return cls(out)


# --------------------------------------------------------------------------
# f identities


@dataclass(frozen=True)
class G:
    i: int


@dataclass(frozen=True)
class Z:
    r: int


@dataclass(frozen=True)
class ZCopy:
    d: int
    r: int


FIdentity = G | Z | ZCopy


def _check_index(schedule: Schedule, j: int) -> None:
    if j < 0 or j > schedule.horizon:
        raise OutOfHorizon(f"index {j} outside [0, {schedule.horizon}]")


def f_identity(schedule: Schedule, j: int) -> FIdentity:
    _check_index(schedule, j)
    tag = schedule.classify(j).kind
    if isinstance(tag, AWork):
        st = schedule.step(tag.n)
        if schedule.variant == "th2":
            return Z(schedule.kappa(tag.n) - (st.a - j))
        r = tag.r
        return ZCopy(schedule.d[tag.n - r + 1] + j - r * st.a, r)
    return G(schedule.sigma(j))


def copy_index(schedule: Schedule, d: int, r: int) -> int:
    """f-index of z_r^(d) in the multi-interval build."""
    for m in range(1, len(schedule.d)):
        if schedule.d[m] <= d < (schedule.d[m + 1] if m + 1 < len(schedule.d) else d + 1):
            n = m + r - 1
            j = r * schedule.a(n) + d - schedule.d[m]
            _check_index(schedule, j)
            return j
    raise OutOfHorizon(f"copy {d} not covered by the built steps")


# --------------------------------------------------------------------------
# lay-off weights


def layoff_exponent(tag: LayOff, j: int) -> tuple[Fraction, int]:
    """log2 lambda_j = numerator / sqrt(scale); returns (numerator, scale)."""
    return Fraction(tag.scale, 2) + tag.k + 1 - j, tag.scale


def lambda_log2(schedule: Schedule, j: int) -> Scalar:
    """log2 of the lay-off weight lambda_j."""
    _check_index(schedule, j)
    tag = schedule.classify(j).kind
    if not isinstance(tag, LayOff):
        raise NotLayOff(f"index {j} is not in a lay-off interval")
    num, scale = layoff_exponent(tag, j)
    root = gmpy2.isqrt(scale)
    q = mpq(num.numerator, num.denominator)
    if root * root == scale:
        return q / int(root)
    return q / gmpy2.sqrt(mpfr(scale))


def layoff_weight(schedule: Schedule, j: int) -> Scalar:
    """The lay-off weight lambda_j = 2^((l/2 + k + 1 - j)/sqrt(l))."""
    _check_index(schedule, j)
    tag = schedule.classify(j).kind
    if not isinstance(tag, LayOff):
        raise NotLayOff(f"index {j} is not in a lay-off interval")
    return _lambda_value(schedule, tag, j)


def _lambda_value(schedule: Schedule, tag: LayOff, j: int) -> Scalar:
    num, scale = layoff_exponent(tag, j)
    root = gmpy2.isqrt(scale)
    if root * root == scale:
        e = num / int(root)
        if e.denominator == 1:
            return pow2(e.numerator)
        return gmpy2.exp2(mpfr(mpq(e.numerator, e.denominator)))
    return gmpy2.exp2(mpfr(mpq(num.numerator, num.denominator)) / gmpy2.sqrt(mpfr(scale)))


# --------------------------------------------------------------------------
# defining rules


def e_rule(schedule: Schedule, j: int) -> tuple[Scalar, list[tuple[int, Scalar]]]:
    """(diag, refs) with e_j = diag * f_j + sum(coef * e_k for k, coef in refs)."""
    if j == 0:
        return ONE, []
    tag = schedule.classify(j).kind
    if isinstance(tag, LayOff):
        return 1 / _lambda_value(schedule, tag, j), []
    if isinstance(tag, AWork):
        n = tag.n
        st = schedule.step(n)
        if schedule.variant == "th2":
            k = st.a - j
            if k >= 1:
                return mpq(st.a) ** (k + 1), []
            return schedule.alpha(n), [(schedule.a(n - 1), ONE)]
        r = tag.r
        target = j - r * st.a + (r - 1) * schedule.a(n - 1)
        return schedule.alpha(r) / schedule.a(n - r), [(target, ONE)]
    if isinstance(tag, BWork):
        b = schedule.step(tag.n).b
        return ONE, [(j - b, mpq(b))]
    if isinstance(tag, CWork):
        st = schedule.step(tag.n)
        diag = st.gamma * pow2(2 * (tag.weight - 1))
        ct = st.c[tag.t - 1]
        poly = st.net[tag.t - 1]
        return diag, [(j - ct + d, v) for d, v in poly.terms()]
    raise AssertionError(f"unclassified index {j}")


def f_in_e(schedule: Schedule, j: int) -> FVector:
    """e-coordinates of f_j, read off the defining relations."""
    _check_index(schedule, j)
    if j == 0:
        return FVector.unit(0)
    tag = schedule.classify(j).kind
    if isinstance(tag, LayOff):
        return FVector.unit(j, _lambda_value(schedule, tag, j))
    if isinstance(tag, AWork):
        n = tag.n
        st = schedule.step(n)
        if schedule.variant == "th2":
            k = st.a - j
            if k >= 1:
                return FVector.unit(j, mpq(1) / mpq(st.a) ** (k + 1))
            inv = 1 / schedule.alpha(n)
            return FVector({j: inv, schedule.a(n - 1): -inv})
        r = tag.r
        w = schedule.a(n - r) / schedule.alpha(r)
        target = j - r * st.a + (r - 1) * schedule.a(n - 1)
        return FVector({j: w, target: -w})
    if isinstance(tag, BWork):
        b = schedule.step(tag.n).b
        return FVector({j: 1, j - b: -b})
    st = schedule.step(tag.n)
    inv = 1 / (st.gamma * pow2(2 * (tag.weight - 1)))
    ct = st.c[tag.t - 1]
    out = {j: inv}
    for d, v in st.net[tag.t - 1].terms():
        out[j - ct + d] = out.get(j - ct + d, ZERO) - v * inv
    return FVector(out)


def e_to_f(schedule: Schedule, ecoeffs: FVector | Mapping[int, object]) -> FVector:
    """Convert an e-combination into f-coordinates by peeling the top index."""
    src = ecoeffs.items() if isinstance(ecoeffs, FVector) else list(ecoeffs.items())
    coef: dict[int, Scalar] = {}
    for m, v in src:
        v = to_scalar(v)
        if v != 0:
            _check_index(schedule, m)
            coef[m] = v
    heap = [-m for m in coef]
    heapq.heapify(heap)
    out: dict[int, Scalar] = {}
    memo = _memo(schedule)
    while heap:
        m = -heapq.heappop(heap)
        c = coef.pop(m)
        if c == 0:
            continue
        if m in memo and len(memo[m]) <= 4:
            # short memoized rows are cheaper to splice in than to re-peel
            for k, v in memo[m]._c.items():
                out[k] = cap(out[k] + c * v) if k in out else cap(c * v)
            continue
        diag, refs = e_rule(schedule, m)
        out[m] = cap(out[m] + c * diag) if m in out else cap(c * diag)
        for k, v in refs:
            if k in coef:
                coef[k] = cap(coef[k] + c * v)
            else:
                coef[k] = cap(c * v)
                heapq.heappush(heap, -k)
    return FVector._raw(out)


def f_to_e(schedule: Schedule, x: FVector) -> FVector:
    """e-coordinates of a finitely supported f-vector."""
    out: dict[int, Scalar] = {}
    for j, v in x.items():
        for m, w in f_in_e(schedule, j)._c.items():
            out[m] = cap(out[m] + v * w) if m in out else cap(v * w)
    return FVector._raw(out)


def _memo(schedule: Schedule) -> dict[int, FVector]:
    return schedule.cache.setdefault("e_in_f", {})


def e_in_f(schedule: Schedule, j: int) -> FVector:
    """f-coordinates of e_j (memoized for small indices)."""
    _check_index(schedule, j)
    memo = _memo(schedule)
    hit = memo.get(j)
    if hit is not None:
        return hit
    vec = e_to_f(schedule, {j: ONE})
    if j <= E_MEMO_CAP:
        memo[j] = vec
    return vec


# --------------------------------------------------------------------------
# norms


def _z_norm(schedule: Schedule, vals: list[Scalar]) -> Scalar:
    if not vals:
        return ZERO
    if schedule.params.z_space is ZSpace.C0_CANONICAL:
        return max(abs(v) for v in vals)
    return real_pow(sum((v * v for v in vals), ZERO), Fraction(1, 2))


def split_coordinates(schedule: Schedule, x: FVector) -> tuple[list[Scalar], dict[int, list[Scalar]]]:
    """Split x into its l_p coordinates and its Z coordinates grouped per copy."""
    g: list[Scalar] = []
    z: dict[int, list[Scalar]] = {}
    for j, v in x.items():
        _check_index(schedule, j)
        tag = schedule.classify(j).kind if j else Root()
        if isinstance(tag, AWork):
            copy = 0 if schedule.variant == "th2" else schedule.d[tag.n - tag.r + 1] + j - tag.r * schedule.step(tag.n).a
            z.setdefault(copy, []).append(v)
        else:
            g.append(v)
    return g, z


def norm(schedule: Schedule, x: FVector) -> Scalar:
    """Mixed norm of x: the l_p (or c0) part combined with the Z copies."""
    g, z = split_coordinates(schedule, x)
    znorms = [_z_norm(schedule, vals) for _, vals in sorted(z.items())]
    space = schedule.params.space
    if isinstance(space, C0):
        return max([abs(v) for v in g] + znorms, default=ZERO)
    p = Fraction(space.p)
    if p == 1:
        return sum((abs(v) for v in g), ZERO) + sum(znorms, ZERO)
    total = sum((real_pow(abs(v), p) for v in g), ZERO) + sum((real_pow(w, p) for w in znorms), ZERO)
    return real_pow(total, 1 / p)


def dual_norm(schedule: Schedule, j: int) -> Scalar:
    """Norm of the coordinate functional f_j^*.

    Off the (a)-indices this is a canonical l_p/c0 functional; on them it is a
    coordinate functional of c0 or l2, so the value is 1 in every built-in case.
    """
    _check_index(schedule, j)
    return ONE


def e_norm(schedule: Schedule, j: int) -> Scalar:
    return norm(schedule, e_in_f(schedule, j))
