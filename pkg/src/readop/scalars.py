"""High-precision scalar helpers.

Coefficients are either exact rationals (``mpq``) or binary floats (``mpfr``)
at the context precision.  Mixing the two promotes to ``mpfr``, so any value
that never meets an irrational factor stays exact.
"""

from __future__ import annotations

from fractions import Fraction

import gmpy2
from gmpy2 import mpfr, mpq, mpz

DEFAULT_PRECISION = 256

# Rationals whose numerator or denominator exceed this many bits are
# demoted to mpfr; long (b)-chains would otherwise carry million-bit integers.
RATIONAL_BIT_CAP = 2048

Scalar = mpq | mpfr


def set_precision(bits: int) -> None:
    if bits < 64:
        raise ValueError("precision must be at least 64 bits")
    gmpy2.get_context().precision = bits


def precision() -> int:
    return gmpy2.get_context().precision


set_precision(DEFAULT_PRECISION)


def to_scalar(x) -> Scalar:
    """Convert ints, Fractions, strings and gmpy2 values to a scalar."""
    if isinstance(x, (type(mpq(0)), type(mpfr(0)))):
        return x
    if isinstance(x, (int, type(mpz(0)))):
        return mpq(x)
    if isinstance(x, Fraction):
        return mpq(x.numerator, x.denominator)
    if isinstance(x, float):
        return mpq(x)
    if isinstance(x, str):
        return parse_scalar(x)
    raise TypeError(f"cannot convert {type(x).__name__} to a scalar")


def is_exact(x) -> bool:
    return isinstance(x, type(mpq(0)))


def cap(x: Scalar) -> Scalar:
    """Demote an oversized rational to a float at working precision."""
    if is_exact(x) and (x.numerator.bit_length() > RATIONAL_BIT_CAP
                        or x.denominator.bit_length() > RATIONAL_BIT_CAP):
        return mpfr(x)
    return x


def pow2(exponent) -> Scalar:
    """2**exponent, exact when the exponent is an integer of moderate size."""
    if isinstance(exponent, (int, type(mpz(0)))):
        e = int(exponent)
        if abs(e) > RATIONAL_BIT_CAP:
            # exact in binary floating point, or 0/inf beyond the exponent range
            return gmpy2.exp2(mpfr(e))
        return mpq(mpz(1) << e) if e >= 0 else mpq(1, mpz(1) << -e)
    if isinstance(exponent, Fraction) and exponent.denominator == 1:
        return pow2(exponent.numerator)
    if is_exact(exponent) and exponent.denominator == 1:
        return pow2(int(exponent.numerator))
    return gmpy2.exp2(mpfr(exponent) if not isinstance(exponent, Fraction)
                      else mpfr(mpq(exponent.numerator, exponent.denominator)))


def log2_abs(x: Scalar) -> mpfr:
    """log2 |x| as a float; -inf for zero."""
    if x == 0:
        return mpfr("-inf")
    if is_exact(x):
        num, den = abs(x.numerator), x.denominator
        # Split off the power of two so that huge rationals stay accurate.
        shift = num.bit_length() - den.bit_length()
        return gmpy2.log2(mpfr(mpq(num, den) / pow2(shift))) + shift
    return gmpy2.log2(abs(x))


def real_sqrt(x: Scalar) -> Scalar:
    """Square root, exact for perfect-square rationals."""
    if is_exact(x) and x >= 0:
        n, d = x.numerator, x.denominator
        if gmpy2.is_square(n) and gmpy2.is_square(d):
            return mpq(gmpy2.isqrt(n), gmpy2.isqrt(d))
    return gmpy2.sqrt(mpfr(x))


def real_pow(x: Scalar, p: Fraction) -> Scalar:
    """x**p for x >= 0 and rational p, exact when p is an integer."""
    if p.denominator == 1 and is_exact(x):
        return x ** int(p.numerator)
    if p == Fraction(1, 2):
        return real_sqrt(x)
    if x == 0:
        return mpq(0)
    return mpfr(x) ** mpfr(mpq(p.numerator, p.denominator))


def is_dyadic(x: Scalar) -> bool:
    if not is_exact(x):
        return True
    d = int(x.denominator)
    return d & (d - 1) == 0


def format_scalar(x: Scalar) -> str:
    """Bit-exact text form: hex float for dyadic values, num/den otherwise."""
    if is_exact(x):
        if x.denominator == 1:
            return format(mpfr(x, max(64, x.numerator.bit_length() + 1)), "a")
        if not is_dyadic(x):
            return f"{x.numerator}/{x.denominator}"
        bits = max(64, x.numerator.bit_length() + 1)
        return format(mpfr(x, bits), "a")
    return format(x, "a")


def parse_scalar(text: str) -> Scalar:
    """Inverse of :func:`format_scalar`; also accepts decimals and ints."""
    s = text.strip()
    if not s:
        raise ValueError("empty scalar")
    if "/" in s:
        num, den = s.split("/", 1)
        return mpq(int(num), int(den))
    low = s.lower()
    if "0x" in low:
        # Hex floats are exact; recover a rational when the value is dyadic
        # with a short mantissa so rational paths survive a round trip.
        bits = max(precision(), 4 * len(s) + 8)
        v = mpfr(s, bits)
        q = mpq(v)
        return q if q.denominator.bit_length() <= RATIONAL_BIT_CAP else v
    if any(c in low for c in ".e") or low in ("inf", "-inf", "nan"):
        return mpq(Fraction(s)) if low not in ("inf", "-inf", "nan") else mpfr(s)
    return mpq(int(s))


def format_real(x, digits: int = 20) -> str:
    """Deterministic decimal rendering for reports."""
    if isinstance(x, (int, type(mpz(0)))):
        return str(x)
    v = mpfr(x) if not isinstance(x, type(mpfr(0))) else x
    if gmpy2.is_infinite(v):
        return "inf" if v > 0 else "-inf"
    if gmpy2.is_nan(v):
        return "nan"
    if v == 0:
        return "0"
    mant, exp, _ = v.digits(10, digits + 1)
    sign = "-" if mant.startswith("-") else ""
    mant = mant.lstrip("-")
    return f"{sign}{mant[0]}.{mant[1:]}e{exp - 1:+d}"
