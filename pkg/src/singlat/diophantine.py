"""Simultaneous weighted Diophantine approximation by direct search.

A witness for ``(x, T, delta)`` is an integer pair ``(p, q)`` with

    ||q x - p||_r < delta / T   and   1 <= q < delta T,

where ``||y||_r = max |y_i|^{1/r_i}``. For fixed q the quasinorm is
minimized by rounding ``q x`` coordinatewise, so the search runs over q
only and is exhaustive.

Inputs are converted with :func:`singlat.numbers.exact`, so the strict
inequalities behave as written for the numbers the caller typed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

from .dynamics import UnimodularLattice, systole
from .numbers import exact
from .exceptions import BudgetExceededError
from .weights import as_weights

__all__ = [
    "exact",
    "quasinorm",
    "ApproximationWitness",
    "find_witness",
    "dirichlet_check",
    "default_grid",
    "SingularityReport",
    "sing_scan",
    "SandwichResult",
    "sandwich_check",
    "totally_irrational_screen",
    "DEFAULT_Q_CAP",
]

DEFAULT_Q_CAP = 10**8
_CHUNK = 1 << 18


def _exact_vec(x) -> tuple[Fraction, ...]:
    return tuple(exact(c) for c in x)


def quasinorm(x: Sequence, r) -> float:
    """``max_i |x_i|^{1/r_i}``."""
    w = as_weights(r)
    if len(x) != w.n:
        raise ValueError("x and r have different lengths")
    return max(abs(float(c)) ** (1.0 / ri) for c, ri in zip(x, w.r))


@dataclass(frozen=True)
class ApproximationWitness:
    """Integer pair (p, q) solving the weighted system at (T, delta)."""

    p: tuple[int, ...]
    q: int
    T: float
    delta: float
    quasinorm_value: float

    def residual(self, x) -> tuple[Fraction, ...]:
        return tuple(self.q * xi - pi for xi, pi in zip(_exact_vec(x), self.p))

    def revalidate(self, x, r) -> bool:
        delta, T = exact(self.delta), exact(self.T)
        if not 1 <= self.q < delta * T:
            return False
        return quasinorm([float(d) for d in self.residual(x)], r) < float(delta / T)

    def to_dict(self) -> dict:
        return {
            "p": list(self.p),
            "q": self.q,
            "T": self.T,
            "delta": self.delta,
            "quasinorm": self.quasinorm_value,
        }


def _nearest(v: Fraction) -> int:
    # round() on Fraction rounds half to even
    return round(v)


def _search(xs, thresholds, qmax: int, accept):
    """Smallest q in [1, qmax] with every |q x_i - p_i| < thresholds[i] and accept(q, p)."""
    xf = np.array([float(c) for c in xs])
    thr = np.asarray(thresholds, dtype=float)
    screen = thr * (1 + 1e-7)
    start = 1
    while start <= qmax:
        stop = min(qmax, start + _CHUNK - 1)
        q = np.arange(start, stop + 1, dtype=np.float64)
        y = np.outer(q, xf)
        d = np.abs(y - np.rint(y))
        slack = q[:, None] * 4e-16 * (np.abs(xf) + 1)
        ok = np.all(d < screen + slack, axis=1)
        for idx in np.flatnonzero(ok):
            qi = int(start + idx)
            p = tuple(_nearest(qi * c) for c in xs)
            if accept(qi, p):
                return qi, p
        start = stop + 1
    return None


def _q_bound(bound: Fraction) -> int:
    """Largest integer strictly below ``bound``."""
    return math.ceil(bound) - 1


def find_witness(x, r, T, delta, cap: int = DEFAULT_Q_CAP) -> ApproximationWitness | None:
    """Minimal-q witness of ``||qx - p||_r < delta/T``, ``q < delta T``, or None.

    Raises
    ------
    BudgetExceededError
        When ``delta * T`` exceeds ``cap``.
    """
    w = as_weights(r)
    xs = _exact_vec(x)
    if len(xs) != w.n:
        raise ValueError("x and r have different lengths")
    Te, de = exact(T), exact(delta)
    if Te < 1:
        raise ValueError("T must be >= 1")
    if de <= 0:
        raise ValueError("delta must be positive")
    if de * Te > cap:
        raise BudgetExceededError(f"delta*T = {float(de * Te):.3g} exceeds the search cap {cap}")
    qmax = _q_bound(de * Te)
    if qmax < 1:
        return None
    target = float(de / Te)
    thresholds = [target**ri for ri in w.r]

    def accept(q, p):
        return quasinorm([float(q * c - pi) for c, pi in zip(xs, p)], w) < target

    hit = _search(xs, thresholds, qmax, accept)
    if hit is None:
        return None
    q, p = hit
    value = quasinorm([float(q * c - pi) for c, pi in zip(xs, p)], w)
    return ApproximationWitness(p, q, float(Te), float(de), value)


def dirichlet_check(x, T, delta, cap: int = DEFAULT_Q_CAP) -> ApproximationWitness | None:
    """Minimal-q solution of ``||qx - p||_inf < delta / T^{1/n}`` with ``1 <= q < T``.

    The returned witness stores the sup norm in ``quasinorm_value``.
    """
    xs = _exact_vec(x)
    n = len(xs)
    Te, de = exact(T), exact(delta)
    if Te <= 1:
        raise ValueError("T must be > 1")
    if de <= 0:
        raise ValueError("delta must be positive")
    if Te > cap:
        raise BudgetExceededError(f"T = {float(Te):.3g} exceeds the search cap {cap}")
    target = float(de) / float(Te) ** (1.0 / n)

    def accept(q, p):
        return max(abs(float(q * c - pi)) for c, pi in zip(xs, p)) < target

    hit = _search(xs, [target] * n, _q_bound(Te), accept)
    if hit is None:
        return None
    q, p = hit
    value = max(abs(float(q * c - pi)) for c, pi in zip(xs, p))
    return ApproximationWitness(p, q, float(Te), float(de), value)


def default_grid(t_min: float = 2.0, t_max: float = 1e6, ratio: float = 2.0) -> list[float]:
    """Geometric grid ``t_min * ratio^k`` below ``t_max``, closed by ``t_max`` itself."""
    if t_min < 1 or ratio <= 1 or t_max < t_min:
        raise ValueError("need 1 <= t_min <= t_max and ratio > 1")
    out = []
    T = float(t_min)
    while T < t_max * (1 - 1e-12):
        out.append(T)
        T *= ratio
    out.append(float(t_max))
    return out


@dataclass
class SingularityReport:
    """Finite-horizon witness table over a grid of T and a schedule of deltas.

    ``table[i][j]`` is the witness for ``delta_schedule[i]`` at ``grid[j]``
    (or None). Membership in Sing(r, T) is never claimed: the verdict
    describes only what happened on the grid.
    """

    x: tuple[str, ...]
    r: tuple[float, ...]
    delta_schedule: tuple[float, ...]
    grid: tuple[float, ...]
    table: list[list[ApproximationWitness | None]] = field(repr=False)

    def failures(self, i: int) -> list[float]:
        return [T for T, wit in zip(self.grid, self.table[i]) if wit is None]

    def first_failure(self, i: int) -> float | None:
        f = self.failures(i)
        return f[0] if f else None

    def last_failure(self, i: int) -> float | None:
        """Largest grid T without a witness for the i-th delta."""
        f = self.failures(i)
        return f[-1] if f else None

    def t0(self, i: int) -> float | None:
        """Smallest grid T from which every grid point has a witness."""
        last = self.last_failure(i)
        if last is None:
            return self.grid[0]
        later = [T for T in self.grid if T > last]
        return later[0] if later else None

    def verdict(self, i: int) -> str:
        t0 = self.t0(i)
        if t0 is not None:
            return f"consistent-with-singular up to T_max={self.grid[-1]:g} (witnesses for all grid T >= {t0:g})"
        fails = self.failures(i)
        return f"refuted at delta={self.delta_schedule[i]:g} for T in [{fails[0]:g}, {fails[-1]:g}] ({len(fails)} grid points)"

    def to_dict(self) -> dict:
        rows = []
        for i, d in enumerate(self.delta_schedule):
            rows.append(
                {
                    "delta": d,
                    "cells": [
                        {"T": T, "witness": None if wit is None else wit.to_dict()}
                        for T, wit in zip(self.grid, self.table[i])
                    ],
                    "first_failure": self.first_failure(i),
                    "last_failure": self.last_failure(i),
                    "T0": self.t0(i),
                    "verdict": self.verdict(i),
                }
            )
        return {"x": list(self.x), "r": list(self.r), "grid": list(self.grid), "deltas": rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def sing_scan(x, r, grid: Sequence[float] | None = None, delta_schedule: Sequence[float] = (0.5, 0.2, 0.1), cap: int = DEFAULT_Q_CAP) -> SingularityReport:
    """Fill the (delta, T) witness table by exhaustive search."""
    w = as_weights(r)
    grid = list(default_grid() if grid is None else grid)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be increasing")
    deltas = list(delta_schedule)
    if any(b >= a for a, b in zip(deltas, deltas[1:])) or any(d <= 0 for d in deltas):
        raise ValueError("delta schedule must be positive and decreasing")
    table = [[find_witness(x, w, T, d, cap=cap) for T in grid] for d in deltas]
    return SingularityReport(
        x=tuple(str(exact(c)) for c in x),
        r=w.r,
        delta_schedule=tuple(float(d) for d in deltas),
        grid=tuple(float(T) for T in grid),
        table=table,
    )


@dataclass(frozen=True)
class SandwichResult:
    lhs: bool
    mid: bool
    rhs: bool

    def __iter__(self):
        yield self.lhs
        yield self.mid
        yield self.rhs

    @property
    def consistent(self) -> bool:
        return (not self.lhs or self.mid) and (not self.mid or self.rhs)


def sandwich_check(x, r, t: float, eps: float) -> SandwichResult:
    """Evaluate the three links of the witness / Mahler-set sandwich.

    ``lhs``: a witness exists at ``T = e^t`` with ``delta = eps^{1/min r}``.
    ``mid``: ``g_t tau(x) Z^{n+1}`` has a nonzero vector of sup norm < eps.
    ``rhs``: a witness exists at ``T = e^t`` with ``delta = eps``.
    The chain lhs => mid => rhs holds when ``eps <= min(1, e^{t min r})``.
    """
    w = as_weights(r)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if eps > 1:
        raise ValueError("eps must be at most 1")
    if math.exp(w.min_weight * t) < eps:
        raise ValueError("requires e^{t min(r)} >= eps")
    T = math.exp(t)
    lhs = find_witness(x, w, T, eps ** (1.0 / w.min_weight)) is not None
    L = UnimodularLattice.from_flow(_exact_vec(x), w, t)
    mid = systole(L, norm="sup").length < eps
    rhs = find_witness(x, w, T, eps) is not None
    return SandwichResult(lhs, mid, rhs)


def totally_irrational_screen(x, H: int, tol: float = 1e-12, budget: float = 5e8) -> bool:
    """Screen for integer relations ``|q_0 + sum q_i x_i| <= tol`` with ``0 < max|q_i| <= H``.

    Returns True when none is found. The search is exhaustive over
    ``(q_1, ..., q_n)`` (with ``q_0`` fixed by rounding) when that costs at most
    ``budget`` evaluations; otherwise it falls back to PSLQ, which only
    finds relations it can certify and is therefore a screen, not a proof.
    """
    if H < 1:
        raise ValueError("H must be >= 1")
    xs = _exact_vec(x)
    n = len(xs)
    cost = (H + 1) * (2 * H + 1) ** (n - 1)
    if cost <= budget:
        return not _exhaustive_relation(xs, H, tol)
    with mpmath.workdps(50):
        vals = [mpmath.mpf(1)] + [mpmath.mpf(c.numerator) / c.denominator for c in xs]
        rel = mpmath.pslq(vals, tol=mpmath.mpf(tol), maxcoeff=H, maxsteps=10**5)
    return rel is None


def _relation_holds(xs, coeffs, H: int, tol: float) -> bool:
    s = sum(c * x for c, x in zip(coeffs, xs))
    q0 = -round(s)
    return abs(q0) <= H and abs(s + q0) <= tol


def _exhaustive_relation(xs, H: int, tol: float) -> bool:
    # float64 pre-screen with a generous margin, then exact confirmation
    n = len(xs)
    xf = np.array([float(c) for c in xs])
    margin = tol + 1e-9
    rest = np.arange(-H, H + 1, dtype=np.float64)
    if n == 1:
        s = np.arange(1, H + 1, dtype=np.float64) * xf[0]
        cand = np.flatnonzero(np.abs(s - np.rint(s)) <= margin)
        return any(_relation_holds(xs, (int(i) + 1,), H, tol) for i in cand)
    grids = np.meshgrid(*([rest] * (n - 1)), indexing="ij")
    tail_coeffs = np.stack([g.ravel() for g in grids], axis=1)
    tail = tail_coeffs @ xf[1:]
    tail_nonzero = np.any(tail_coeffs != 0, axis=1)
    for q1 in range(0, H + 1):
        s = tail + q1 * xf[0]
        hit = np.abs(s - np.rint(s)) <= margin
        if q1 == 0:
            hit &= tail_nonzero
        for idx in np.flatnonzero(hit):
            coeffs = (q1,) + tuple(int(c) for c in tail_coeffs[idx])
            if _relation_holds(xs, coeffs, H, tol):
                return True
    return False
