"""Weight vectors r = (r_1, ..., r_n) with positive entries summing to one."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = ["WeightVector", "as_weights", "equal_weights"]

_SUM_TOL = 1e-12


@dataclass(frozen=True)
class WeightVector:
    """Exponent vector of the diagonal flow.

    Parameters
    ----------
    r : sequence of float
        Positive weights with ``sum(r) == 1`` (to 1e-12).

    Attributes
    ----------
    n : int
        Diophantine dimension ``len(r)``.
    min_weight : float
        ``min(r)``, the slowest expansion rate.
    """

    r: tuple[float, ...]
    n: int = field(init=False)
    min_weight: float = field(init=False)

    def __post_init__(self):
        r = tuple(float(Fraction(c)) if isinstance(c, str) else float(c) for c in self.r)
        if not r:
            raise ValueError("weight vector must be nonempty")
        if any(not math.isfinite(c) or c <= 0 for c in r):
            raise ValueError(f"weights must be positive, got {r}")
        if abs(math.fsum(r) - 1.0) > _SUM_TOL:
            raise ValueError(f"weights must sum to 1, got sum {math.fsum(r)!r}")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "n", len(r))
        object.__setattr__(self, "min_weight", min(r))

    @property
    def max_weight(self) -> float:
        return max(self.r)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.r, dtype=float)

    def exponents(self) -> np.ndarray:
        """Diagonal exponents of g_1: (r_1, ..., r_n, -1)."""
        return np.append(self.as_array(), -1.0)

    def __len__(self) -> int:
        return self.n


def as_weights(r) -> WeightVector:
    if isinstance(r, WeightVector):
        return r
    return WeightVector(tuple(r))


def equal_weights(n: int) -> WeightVector:
    return WeightVector(tuple([1.0 / n] * n))
