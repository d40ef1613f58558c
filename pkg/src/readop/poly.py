"""Sparse polynomials in the indeterminate zeta with high-precision coefficients."""

from __future__ import annotations

from collections.abc import Iterable, Mapping

from gmpy2 import mpq

from .scalars import Scalar, format_scalar, to_scalar


class Polynomial:
    """Polynomial stored as a map degree -> nonzero coefficient.

    Pipeline polynomials can have degree near 10**15 with a handful of terms,
    so the dense coefficient list is only materialised on request.
    """

    __slots__ = ("_terms",)

    def __init__(self, coeffs: Mapping[int, object] | Iterable[object] = ()):
        terms: dict[int, Scalar] = {}
        items = coeffs.items() if isinstance(coeffs, Mapping) else enumerate(coeffs)
        for deg, c in items:
            if deg < 0:
                raise ValueError("negative degree")
            v = to_scalar(c)
            if v != 0:
                terms[int(deg)] = terms.get(int(deg), mpq(0)) + v
        self._terms = {d: v for d, v in sorted(terms.items()) if v != 0}

    @classmethod
    def monomial(cls, degree: int, coeff: object = 1) -> Polynomial:
        return cls({degree: coeff})

    @property
    def degree(self) -> int:
        """Degree of the polynomial; -1 for the zero polynomial."""
        return max(self._terms) if self._terms else -1

    @property
    def coeffs(self) -> list[Scalar]:
        """Dense coefficients a_0..a_d."""
        out = [mpq(0)] * (self.degree + 1)
        for d, v in self._terms.items():
            out[d] = v
        return out

    def terms(self) -> list[tuple[int, Scalar]]:
        return list(self._terms.items())

    def coeff(self, degree: int) -> Scalar:
        return self._terms.get(degree, mpq(0))

    def modulus(self) -> Scalar:
        """|p| = sum of absolute values of the coefficients."""
        return sum((abs(v) for v in self._terms.values()), mpq(0))

    def is_zero(self) -> bool:
        return not self._terms

    def __add__(self, other: Polynomial) -> Polynomial:
        out = dict(self._terms)
        for d, v in other._terms.items():
            out[d] = out.get(d, mpq(0)) + v
        return Polynomial(out)

    def __sub__(self, other: Polynomial) -> Polynomial:
        return self + other.scale(-1)

    def scale(self, factor: object) -> Polynomial:
        f = to_scalar(factor)
        return Polynomial({d: v * f for d, v in self._terms.items()})

    def shift(self, k: int) -> Polynomial:
        """Multiply by zeta**k."""
        return Polynomial({d + k: v for d, v in self._terms.items()})

    def __mul__(self, other: Polynomial) -> Polynomial:
        out: dict[int, Scalar] = {}
        for d1, v1 in self._terms.items():
            for d2, v2 in other._terms.items():
                out[d1 + d2] = out.get(d1 + d2, mpq(0)) + v1 * v2
        return Polynomial(out)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Polynomial) and self._terms == other._terms

    def __hash__(self) -> int:
        return hash(tuple((d, format_scalar(v)) for d, v in self._terms.items()))

    def __repr__(self) -> str:
        if not self._terms:
            return "Polynomial(0)"
        body = " + ".join(f"{format_scalar(v)}*z^{d}" for d, v in self._terms.items())
        return f"Polynomial({body})"

    def to_text(self) -> str:
        """Space-separated `degree:value` pairs."""
        return " ".join(f"{d}:{format_scalar(v)}" for d, v in self._terms.items()) or "0"

    @classmethod
    def from_text(cls, text: str) -> Polynomial:
        from .scalars import parse_scalar

        text = text.strip()
        if text in ("", "0"):
            return cls()
        terms = {}
        for tok in text.split():
            deg, val = tok.split(":", 1)
            terms[int(deg)] = parse_scalar(val)
        return cls(terms)
