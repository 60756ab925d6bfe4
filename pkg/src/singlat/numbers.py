"""Exact conversion of user-supplied numbers."""

from __future__ import annotations

import math
from fractions import Fraction

import mpmath
import numpy as np

__all__ = ["exact", "exact_vector"]


def exact(v) -> Fraction:
    """Exact rational value of a number, string (decimal or ``a/b``) or Fraction.

    Python floats are read through their shortest decimal representation,
    so ``0.1`` means 1/10 rather than the nearest binary fraction.
    """
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    if isinstance(v, (float, np.floating)):
        if not math.isfinite(v):
            raise ValueError(f"non-finite value {v!r}")
        return Fraction(repr(float(v)))
    if isinstance(v, str):
        return Fraction(v.strip())
    if isinstance(v, mpmath.mpf):
        m, e = mpmath.mpf(v).man_exp
        return Fraction(int(m)) * (Fraction(2) ** int(e))
    return Fraction(v)


def exact_vector(xs) -> tuple[Fraction, ...]:
    return tuple(exact(c) for c in xs)
