"""Exact rational intervals and simplest rationals.

Endpoints are Fractions, so sums and products of intervals are exact.
Irrational constants enter through enclosures computed with mpmath at
60 digits and widened by 1e-55, which rounds them outward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import sympy

__all__ = ["Interval", "simplest_rational", "simplest_in_open", "min_key_rational", "evaluate_interval", "rationals_in"]

_CONST_PAD = Fraction(1, 10**55)


@dataclass(frozen=True)
class Interval:
    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError("empty interval")

    @classmethod
    def point(cls, v) -> "Interval":
        v = Fraction(v)
        return cls(v, v)

    def __add__(self, other: "Interval") -> "Interval":
        return Interval(self.lo + other.lo, self.hi + other.hi)

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __sub__(self, other: "Interval") -> "Interval":
        return self + (-other)

    def __mul__(self, other: "Interval") -> "Interval":
        ps = (self.lo * other.lo, self.lo * other.hi, self.hi * other.lo, self.hi * other.hi)
        return Interval(min(ps), max(ps))

    def __pow__(self, k: int) -> "Interval":
        if k < 0:
            raise ValueError("negative powers are not supported")
        if k == 0:
            return Interval.point(1)
        a, b = self.lo**k, self.hi**k
        if k % 2 == 0:
            if self.lo <= 0 <= self.hi:
                return Interval(Fraction(0), max(a, b))
            return Interval(min(a, b), max(a, b))
        return Interval(a, b)

    def scale(self, c: int) -> "Interval":
        return self * Interval.point(c)

    def contains(self, v) -> bool:
        return self.lo <= v <= self.hi

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo


def simplest_rational(lo: Fraction, hi: Fraction) -> Fraction:
    """Rational with the smallest denominator in the closed interval [lo, hi].

    When several integers qualify the smallest is returned; otherwise the
    answer is unique.
    """
    lo, hi = Fraction(lo), Fraction(hi)
    if lo > hi:
        raise ValueError("empty interval")
    c = math.ceil(lo)
    if c <= hi:
        return Fraction(c)
    f = math.floor(lo)
    # lo and hi lie strictly inside (f, f + 1)
    return f + 1 / simplest_rational(1 / (hi - f), 1 / (lo - f))


def simplest_in_open(lo: Fraction, hi: Fraction) -> Fraction:
    """Smallest-denominator rational (then smallest numerator) in the open interval (lo, hi)."""
    lo, hi = Fraction(lo), Fraction(hi)
    if lo >= hi:
        raise ValueError("empty interval")
    f = math.floor(lo)
    if f + 1 < hi:
        return Fraction(f + 1)
    if lo == f:
        return f + Fraction(1, math.floor(1 / (hi - f)) + 1)
    return f + 1 / simplest_in_open(1 / (hi - f), 1 / (lo - f))


def min_key_rational(lo: Fraction, hi: Fraction) -> Fraction:
    """Farey-first rational (denominator, then numerator) in the closed interval [lo, hi]."""
    return simplest_rational(lo, hi)


def rationals_in(lo: Fraction, hi: Fraction, H: int) -> list[Fraction]:
    """All a/b in lowest terms with 1 <= b <= H in the closed interval, Farey ordered."""
    out = []
    for b in range(1, H + 1):
        for a in range(math.ceil(Fraction(lo) * b), math.floor(Fraction(hi) * b) + 1):
            if math.gcd(a, b) == 1:
                out.append(Fraction(a, b))
    return out


def _constant(expr) -> Interval:
    with mpmath.workdps(60):
        v = Fraction(str(sympy.N(expr, 60)))
    return Interval(v - _CONST_PAD, v + _CONST_PAD)


def evaluate_interval(expr, env: dict) -> Interval:
    """Enclose a polynomial sympy expression over a box of symbol intervals."""
    if expr.is_Symbol:
        return env[expr]
    if expr.is_Rational:
        return Interval.point(Fraction(int(expr.p), int(expr.q)))
    if expr.is_number:
        return _constant(expr)
    if expr.is_Add:
        out = Interval.point(0)
        for a in expr.args:
            out = out + evaluate_interval(a, env)
        return out
    if expr.is_Mul:
        out = Interval.point(1)
        for a in expr.args:
            out = out * evaluate_interval(a, env)
        return out
    if expr.is_Pow and expr.exp.is_Integer and int(expr.exp) >= 0:
        return evaluate_interval(expr.base, env) ** int(expr.exp)
    raise ValueError(f"unsupported term {expr} (charts must be polynomial)")
