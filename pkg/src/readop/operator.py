"""The operator T on truncations, its shift-plus-nuclear split, projections and nets."""

from __future__ import annotations

import random
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from fractions import Fraction

from gmpy2 import mpq

from .basis import FVector, dual_norm, e_in_f, e_to_f, f_to_e, norm
from .errors import (BudgetExceeded, DomainExceeded, HorizonExceeded, NetTooLarge,
                     OutOfHorizon, StepNotBuilt)
from .poly import Polynomial
from .schedule import (AWork, C0, Grid, Schedule, Targeted, ZSpace, _ball_count, grid_net)
from .scalars import Scalar, cap, format_scalar, real_pow

__all__ = [
    "SparseOperator", "SKDecomposition", "Polynomial", "Nu", "A", "Mu",
    "column_Tf", "assemble", "sk_split", "apply", "power_apply", "apply_poly",
    "projection_Q", "polynomial_net", "operator_norm_bound", "identity", "diagonal",
    "truncation", "compose", "to_triplets",
]

ZERO = mpq(0)


@dataclass
class SparseOperator:
    """Column map j -> image of f_j for 0 <= j <= dom_max.

    Columns are either materialised in ``columns`` or produced on demand by
    ``column_fn``; absent columns are zero.
    """

    columns: dict[int, FVector]
    dom_max: int
    codom_max: int
    column_fn: Callable[[int], FVector] | None = field(default=None, repr=False)
    name: str = ""

    def column(self, j: int) -> FVector:
        if j < 0 or j > self.dom_max:
            raise DomainExceeded(f"{self.name or 'operator'}: column {j} outside [0, {self.dom_max}]")
        if j in self.columns:
            return self.columns[j]
        if self.column_fn is not None:
            return self.column_fn(j)
        return FVector()

    def stored(self) -> list[tuple[int, FVector]]:
        return sorted(self.columns.items())


def identity(n_max: int) -> SparseOperator:
    return SparseOperator({j: FVector.unit(j) for j in range(n_max + 1)}, n_max, n_max, name="identity")


def diagonal(values: Iterable[object]) -> SparseOperator:
    cols = {j: FVector.unit(j, v) for j, v in enumerate(values)}
    n = len(cols) - 1
    return SparseOperator(cols, n, n, name="diagonal")


def truncation(n_max: int, dom_max: int | None = None) -> SparseOperator:
    """pi_[0, n_max] as an operator on [0, dom_max]."""
    dom = n_max if dom_max is None else dom_max
    return SparseOperator({j: FVector.unit(j) for j in range(n_max + 1)}, dom, n_max,
                          name=f"pi[0,{n_max}]")


# --------------------------------------------------------------------------
# T


def column_Tf(schedule: Schedule, j: int) -> FVector:
    """T f_j: expand f_j in e, shift indices by one, convert back."""
    if j < 0 or j >= schedule.horizon:
        raise OutOfHorizon(f"column {j} needs index {j + 1} beyond horizon {schedule.horizon}")
    return e_to_f(schedule, f_to_e(schedule, FVector.unit(j)).shift(1))


def assemble(schedule: Schedule, n_max: int) -> SparseOperator:
    """T restricted to F_N with every column materialised."""
    if n_max >= schedule.horizon:
        raise OutOfHorizon(f"cannot assemble F_{n_max} inside horizon {schedule.horizon}")
    cols = {j: column_Tf(schedule, j) for j in range(n_max + 1)}
    codom = max((c.max_index() for c in cols.values()), default=0)
    return SparseOperator(cols, n_max, codom, name=f"T|F_{n_max}")


def apply(op: SparseOperator, x: FVector) -> FVector:
    out: dict[int, Scalar] = {}
    for j, v in x.items():
        for k, w in op.column(j).items():
            out[k] = cap(out[k] + v * w) if k in out else cap(v * w)
    return FVector(out)


def compose(outer: SparseOperator, inner: SparseOperator) -> SparseOperator:
    cols = {j: apply(outer, c) for j, c in inner.stored()}
    codom = max((c.max_index() for c in cols.values()), default=0)
    return SparseOperator(cols, inner.dom_max, codom, name=f"{outer.name}*{inner.name}")


def _shift_check(schedule: Schedule, ex: FVector, c: int) -> None:
    if ex.max_index() + c > schedule.horizon:
        raise HorizonExceeded(
            f"shift by {c} reaches index {ex.max_index() + c} > horizon {schedule.horizon}")


def power_apply(schedule: Schedule, c: int, x: FVector) -> FVector:
    """T^c x via the index shift on e-coordinates."""
    if c < 0:
        raise ValueError("negative power")
    if x.is_zero():
        return FVector()
    ex = f_to_e(schedule, x)
    _shift_check(schedule, ex, c)
    return e_to_f(schedule, ex.shift(c))


def power_apply_e(schedule: Schedule, c: int, ex: FVector) -> FVector:
    """As power_apply but with input and output both in e-coordinates."""
    _shift_check(schedule, ex, c)
    return ex.shift(c)


def poly_on_e(p: Polynomial, ex: FVector) -> FVector:
    """p(T) on an e-coordinate vector, staying in e-coordinates."""
    out: dict[int, Scalar] = {}
    for d, a in p.terms():
        for m, v in ex.items():
            k = m + d
            out[k] = cap(out[k] + a * v) if k in out else cap(a * v)
    return FVector(out)


def apply_poly(p: Polynomial, schedule: Schedule, x: FVector) -> FVector:
    """p(T) x, summing the shifted e-expansions before converting back."""
    if p.is_zero() or x.is_zero():
        return FVector()
    ex = f_to_e(schedule, x)
    _shift_check(schedule, ex, p.degree)
    return e_to_f(schedule, poly_on_e(p, ex))


# --------------------------------------------------------------------------
# shift + nuclear split


@dataclass
class SKDecomposition:
    weights: dict[int, Scalar]
    nuclear: dict[int, FVector]
    jtilde: list[int]
    nuclear_norms: dict[int, Scalar]
    nuclear_bound: Scalar
    n_max: int
    rho: Fraction

    def rebuild(self) -> dict[int, FVector]:
        """Columns of S + K."""
        cols = {j: FVector.unit(j + 1, w) for j, w in self.weights.items()}
        cols.update(self.nuclear)
        return cols


def in_jtilde(schedule: Schedule, j: int) -> bool:
    """Membership of the nuclear index set: 0, (a)-indices and right endpoints."""
    if j == 0:
        return True
    tag = schedule.classify(j)
    if tag.is_right_endpoint:
        return True
    return schedule.variant == "th2" and isinstance(tag.kind, AWork)


def sk_split(schedule: Schedule, n_max: int, *, raise_on_budget: bool = True) -> SKDecomposition:
    """Split T on F_N into weighted shift and nuclear part."""
    if n_max >= schedule.horizon:
        raise OutOfHorizon(f"cannot split F_{n_max} inside horizon {schedule.horizon}")
    weights: dict[int, Scalar] = {}
    nuclear: dict[int, FVector] = {}
    norms: dict[int, Scalar] = {}
    total = ZERO
    for j in range(n_max + 1):
        col = column_Tf(schedule, j)
        if in_jtilde(schedule, j):
            nuclear[j] = col
            nv = norm(schedule, col)
            norms[j] = nv
            total = total + (1 + dual_norm(schedule, j)) * nv
            continue
        if col.support != [j + 1] and not col.is_zero():
            raise AssertionError(f"column {j} outside the nuclear set is not a forward shift")
        weights[j] = col[j + 1]
    rho = schedule.params.rho
    dec = SKDecomposition(weights, nuclear, sorted(nuclear), norms, total, n_max, rho)
    if raise_on_budget and total >= mpq(rho.numerator, rho.denominator):
        raise BudgetExceeded(f"nuclear sum {float(total):.6g} >= rho = {rho}", decomposition=dec)
    return dec


# --------------------------------------------------------------------------
# projections


@dataclass(frozen=True)
class Nu:
    n: int


@dataclass(frozen=True)
class A:
    n: int


@dataclass(frozen=True)
class Mu:
    n: int


def projection_Q(schedule: Schedule, which: Nu | A | Mu) -> SparseOperator:
    """The projections onto F_nu, F_a (single build) or F_nu, F_mu (multi build).

    Columns are produced lazily: f_j below the cutoff, the correction on the
    next step's (a)-indices, zero elsewhere.
    """
    n = which.n
    if n + 1 > schedule.n_built:
        raise StepNotBuilt(f"projection at step {n} needs step {n + 1}")
    st = schedule.step(n)
    nxt = schedule.step(n + 1)
    if isinstance(which, Nu):
        cutoff = st.nu
    elif isinstance(which, A):
        if schedule.variant != "th2":
            raise ValueError("Q_a is defined for the single-interval build; use Mu")
        cutoff = st.a
    else:
        if schedule.variant != "th1":
            raise ValueError("Q_mu is defined for the multi-interval build")
        cutoff = st.mu
    corrections: dict[int, tuple[Scalar, int]] = {}
    ranges: list[tuple[int, int, Scalar, int]] = []
    if schedule.variant == "th2":
        corrections[nxt.a] = (-1 / schedule.alpha(n + 1), st.a)
    else:
        for r in range(2, n + 2):
            lo = r * nxt.a
            hi = lo + schedule.xis[n + 2 - r]
            coef = -mpq(schedule.a(n + 1 - r)) / schedule.alpha(r)
            ranges.append((lo, hi, coef, -r * nxt.a + (r - 1) * st.a))

    def col(j: int) -> FVector:
        if j <= cutoff:
            return FVector.unit(j)
        if j in corrections:
            coef, m = corrections[j]
            return e_in_f(schedule, m).scale(coef)
        for lo, hi, coef, off in ranges:
            if lo <= j <= hi:
                return e_in_f(schedule, j + off).scale(coef)
        return FVector()

    label = {Nu: "nu", A: "a", Mu: "mu"}[type(which)]
    return SparseOperator({}, schedule.horizon, cutoff, column_fn=col, name=f"Q_{label}{n}")


# --------------------------------------------------------------------------
# nets


def polynomial_net(schedule: Schedule, n: int, mode: Grid | Targeted | None = None,
                   budget: int = 10**6) -> list[Polynomial]:
    """The polynomial net of step n.

    ``None`` returns the frozen net of the step.  A Grid mode enumerates the
    coefficient lattice; a Targeted mode returns its polynomials verbatim.
    """
    st = schedule.step(n)
    if mode is None:
        return list(st.net)
    if isinstance(mode, Targeted):
        two = mpq(2)
        for p in mode.polys:
            if p.modulus() > two:
                raise ValueError("net polynomial outside the radius-2 ball")
        return list(mode.polys)
    dim = mode.max_degree + 1
    radius = int(Fraction(2) / (Fraction(mode.eps) / dim))
    if _ball_count(dim, radius) > budget:
        raise NetTooLarge(f"grid net of degree {mode.max_degree} exceeds the budget {budget}")
    return grid_net(mode.eps, mode.max_degree, budget)


# --------------------------------------------------------------------------
# norm bounds


def _groups(schedule: Schedule, op: SparseOperator) -> tuple[list[int], dict[int, list[int]]]:
    g: list[int] = []
    z: dict[int, list[int]] = {}
    for j, _ in op.stored():
        tag = schedule.classify(j).kind if j else None
        if isinstance(tag, AWork):
            key = 0 if schedule.variant == "th2" else schedule.d[tag.n - tag.r + 1] + j - tag.r * schedule.step(tag.n).a
            z.setdefault(key, []).append(j)
        else:
            g.append(j)
    return g, z


def _sum_sq_root(vals: list[Scalar]) -> Scalar:
    return real_pow(sum((v * v for v in vals), ZERO), Fraction(1, 2))


def operator_norm_bound(op: SparseOperator, schedule: Schedule, samples: int = 32,
                        seed: int = 0) -> tuple[Scalar, Scalar]:
    """(upper, lower) for the operator norm on the space of ``schedule``.

    The upper bound is rigorous for the stored columns: grouped column sums
    for p = 1, row sums for c0, the Schur bound when the whole space is l2,
    and a Hoelder bound over column groups otherwise.  The lower bound is the
    largest ratio seen on basis vectors and seeded random vectors.
    """
    cols = dict(op.stored())
    if not cols:
        return ZERO, ZERO
    space = schedule.params.space
    c0_z = schedule.params.z_space is ZSpace.C0_CANONICAL
    cnorm = {j: norm(schedule, c) for j, c in cols.items()}
    g_idx, z_groups = _groups(schedule, op)

    def group_bound(js: list[int]) -> Scalar:
        vals = [cnorm[j] for j in js]
        return sum(vals, ZERO) if c0_z else _sum_sq_root(vals)

    if isinstance(space, C0):
        rows: dict[int, Scalar] = {}
        for c in cols.values():
            for k, v in c.items():
                rows[k] = rows.get(k, ZERO) + abs(v)
        upper = max(rows.values(), default=ZERO)
        if not c0_z:
            # an l2 Z block on the output side needs the l2 sum of its row bounds
            probe = FVector({k: v for k, v in rows.items()})
            upper = max(upper, norm(schedule, probe))
    else:
        p = Fraction(space.p)
        if p == 1:
            upper = max([cnorm[j] for j in g_idx] + [group_bound(js) for js in z_groups.values()],
                        default=ZERO)
        elif p == 2 and not c0_z:
            col_sum = max(sum((abs(v) for _, v in c.items()), ZERO) for c in cols.values())
            rows = {}
            for c in cols.values():
                for k, v in c.items():
                    rows[k] = rows.get(k, ZERO) + abs(v)
            row_sum = max(rows.values())
            upper = real_pow(col_sum * row_sum, Fraction(1, 2))
        else:
            q = p / (p - 1)
            parts = [real_pow(cnorm[j], q) for j in g_idx]
            parts += [real_pow(group_bound(js), q) for js in z_groups.values()]
            upper = real_pow(sum(parts, ZERO), 1 / q)
    lower = ZERO
    for j, c in cols.items():
        base = norm(schedule, FVector.unit(j))
        lower = max(lower, cnorm[j] / base)
    rng = random.Random(seed)
    keys = sorted(cols)
    for _ in range(samples):
        pick = rng.sample(keys, min(len(keys), 4))
        x = FVector({j: mpq(rng.randint(-8, 8), 8) for j in pick})
        if x.is_zero():
            continue
        lower = max(lower, norm(schedule, apply(op, x)) / norm(schedule, x))
    for js in z_groups.values():
        x = FVector({j: 1 for j in js})
        lower = max(lower, norm(schedule, apply(op, x)) / norm(schedule, x))
    return upper, lower


def to_triplets(op: SparseOperator) -> str:
    """``row col value`` lines sorted by (col, row)."""
    lines = []
    for j, c in op.stored():
        for k, v in c.items():
            lines.append(f"{k} {j} {format_scalar(v)}")
    return "\n".join(lines) + ("\n" if lines else "")
