"""Nested-box construction of points whose trajectories escape to infinity.

The surface M is a two-parameter polynomial chart in graph form over two
selected coordinates ``(k, l)``: the chart's k-th and l-th components are
the parameters ``u`` and ``v`` themselves, so boxes in parameter space are
boxes in the projected coordinates ``(x_k, x_l)`` and the level sets
``x_k = s``, ``x_l = s`` are parameter lines.

Each refinement step picks the next level set on the alternate
coordinate (smallest denominator first), centers a smaller box on it next
to its crossing with the previous level set, and accepts the box only if

* its closure sits inside the previous box,
* it misses every level set that precedes the active one, every other
  integer level set ``<x, v> = s`` up to the exclusion height, and every
  user-supplied point,
* probe points on a 5x5 grid of the box escape ``K_{psi(t)}`` with a 10%
  margin for the step's time window, and probe points on the active level
  set keep escaping up to the horizon.

The margin stands in for the neighborhood whose existence the continuity
argument only asserts; every report says so, and :func:`verify_certificate`
re-checks the final point directly.
"""

from __future__ import annotations

import decimal
import json
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from fractions import Fraction
from typing import Sequence

import numpy as np
import sympy

from .diophantine import default_grid, find_witness
from .dynamics import UnimodularLattice, ell_V, flow_systole_scan, systole, tau
from .exceptions import BoundViolationError, RefinementStallError, SurfaceError
from .intervals import Interval, evaluate_interval, rationals_in, simplest_in_open, simplest_rational
from .lattice import RationalSubspace, integer_kernel, saturate
from .numbers import exact, exact_vector
from .weights import WeightVector, as_weights

__all__ = [
    "SurfaceSpec",
    "LevelSet",
    "DeltaSchedule",
    "ParamBox",
    "StepRecord",
    "ConstructionState",
    "level_family",
    "escape_subspace",
    "EscapeRateBound",
    "escape_rate_bound",
    "construct",
    "VerificationReport",
    "verify_certificate",
    "format_decimal",
]

U, V = sympy.symbols("u v", real=True)
X_DIGITS = 50
DEFAULT_MARGIN = 0.1
PROBE_GRID = 5
PROBE_TIMES = 32


def format_decimal(v: Fraction, digits: int = X_DIGITS) -> str:
    """Round to ``digits`` places after the decimal point (half even)."""
    ctx = decimal.Context(prec=digits + 40, rounding=decimal.ROUND_HALF_EVEN)
    d = ctx.divide(decimal.Decimal(v.numerator), decimal.Decimal(v.denominator))
    return str(d.quantize(decimal.Decimal(1).scaleb(-digits), context=ctx))


# ---------------------------------------------------------------------------
# Surfaces


@dataclass(frozen=True)
class ParamBox:
    """Open square box ``center +- half`` in the (x_k, x_l) parameter plane."""

    center: tuple[Fraction, Fraction]
    half: Fraction

    def interval(self, i: int) -> tuple[Fraction, Fraction]:
        return self.center[i] - self.half, self.center[i] + self.half

    def closure_inside(self, other: "ParamBox") -> bool:
        return all(abs(self.center[i] - other.center[i]) + self.half < other.half for i in range(2))

    def contains_closed(self, p: Sequence[Fraction]) -> bool:
        return all(abs(Fraction(p[i]) - self.center[i]) <= self.half for i in range(2))

    def grid(self, m: int = PROBE_GRID) -> np.ndarray:
        us = np.linspace(float(self.center[0] - self.half), float(self.center[0] + self.half), m)
        vs = np.linspace(float(self.center[1] - self.half), float(self.center[1] + self.half), m)
        return np.array([(a, b) for a in us for b in vs])

    def to_dict(self) -> dict:
        return {"center": [str(c) for c in self.center], "half_width": str(self.half)}


@dataclass(frozen=True)
class SurfaceSpec:
    """Polynomial chart ``(u, v) -> R^n`` in graph form over coordinates (k, l).

    Parameters
    ----------
    chart : tuple of str
        One sympy expression in ``u`` and ``v`` per ambient coordinate.
    domain : tuple of (lo, hi) pairs
        Open parameter box for u and v.
    coords : (k, l)
        1-based selected coordinates; the chart must satisfy
        ``x_k = u`` and ``x_l = v``.
    screen_height : int
        Height up to which rational affine hyperplanes containing M are
        searched for during screening.
    """

    chart: tuple[str, ...]
    domain: tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction]] = ((Fraction(0), Fraction(1)), (Fraction(0), Fraction(1)))
    coords: tuple[int, int] = (1, 2)
    screen_height: int = 10

    def __post_init__(self):
        object.__setattr__(self, "chart", tuple(str(c) for c in self.chart))
        dom = tuple((exact(a), exact(b)) for a, b in self.domain)
        object.__setattr__(self, "domain", dom)
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))

    @classmethod
    def plane(cls) -> "SurfaceSpec":
        """Identity chart of R^2 over the open unit square."""
        return cls(("u", "v"))

    @classmethod
    def parse(cls, text: str) -> "SurfaceSpec":
        """Parse ``plane`` or ``f=<expr>,<expr>,...;dom=a,bxc,d;k=1;l=2``."""
        text = text.strip()
        if text == "plane":
            return cls.plane()
        fields = {}
        for part in text.split(";"):
            key, sep, val = part.partition("=")
            if not sep:
                raise ValueError(f"bad surface field {part!r}")
            fields[key.strip()] = val.strip()
        if "f" not in fields:
            raise ValueError("surface description needs f=<chart>")
        chart = tuple(e.strip() for e in fields.pop("f").split(","))
        dom = ((Fraction(0), Fraction(1)), (Fraction(0), Fraction(1)))
        if "dom" in fields:
            ivs = []
            for iv in fields.pop("dom").split("x"):
                m = re.fullmatch(r"\s*([^,]+),([^,]+)\s*", iv)
                if not m:
                    raise ValueError(f"bad domain interval {iv!r}")
                ivs.append((exact(m.group(1)), exact(m.group(2))))
            if len(ivs) != 2:
                raise ValueError("domain needs two intervals")
            dom = tuple(ivs)
        k = int(fields.pop("k", "1"))
        l = int(fields.pop("l", "2"))
        h = int(fields.pop("screen", "10"))
        if fields:
            raise ValueError(f"unknown surface fields {sorted(fields)}")
        return cls(chart, dom, (k, l), h)

    def describe(self) -> str:
        dom = "x".join(f"{a},{b}" for a, b in self.domain)
        return f"f={','.join(self.chart)};dom={dom};k={self.coords[0]};l={self.coords[1]}"

    @property
    def n(self) -> int:
        return len(self.chart)

    @cached_property
    def exprs(self) -> tuple:
        return tuple(sympy.sympify(c, locals={"u": U, "v": V}) for c in self.chart)

    @cached_property
    def _expanded(self) -> tuple:
        return tuple(sympy.expand(e) for e in self.exprs)

    @cached_property
    def _numeric(self) -> tuple:
        return tuple(sympy.lambdify((U, V), e, "numpy") for e in self.exprs)

    @property
    def domain_box(self) -> ParamBox:
        (a, b), (c, d) = self.domain
        if b - a != d - c:
            half = min(b - a, d - c) / 2
            return ParamBox(((a + b) / 2, (c + d) / 2), half)
        return ParamBox(((a + b) / 2, (c + d) / 2), (b - a) / 2)

    def validate(self) -> None:
        """Screen the chart; raises :class:`SurfaceError` on failure."""
        if self.n < 2:
            raise SurfaceError("the surface must have dimension at least 2 (ambient n >= 2)")
        k, l = self.coords
        if not (1 <= k <= self.n and 1 <= l <= self.n and k != l):
            raise SurfaceError("coords must be two distinct indices in [1, n]")
        for (a, b) in self.domain:
            if not a < b:
                raise SurfaceError("domain intervals must be nonempty")
        exprs = self.exprs
        for e in exprs:
            if not e.free_symbols <= {U, V}:
                raise SurfaceError(f"chart component {e} uses symbols other than u, v")
            try:
                sympy.Poly(e, U, V)
            except sympy.PolynomialError as err:
                raise SurfaceError(f"chart component {e} is not polynomial") from err
        jac = sympy.Matrix(exprs).jacobian([U, V])
        rng = np.random.default_rng(12345)
        pts = self._random_params(rng, 7)
        jf = sympy.lambdify((U, V), jac, "numpy")
        if max(np.linalg.matrix_rank(np.asarray(jf(a, b), dtype=float), tol=1e-9) for a, b in pts) < 2:
            raise SurfaceError("the surface must have dimension at least 2 (chart Jacobian has rank < 2)")
        if sympy.simplify(exprs[k - 1] - U) != 0 or sympy.simplify(exprs[l - 1] - V) != 0:
            raise SurfaceError("chart must be in graph form: component k equal to u and component l equal to v")
        self._screen_hyperplanes(rng)

    def _random_params(self, rng, m: int) -> list[tuple[float, float]]:
        (a, b), (c, d) = self.domain
        return [(float(a) + rng.random() * float(b - a), float(c) + rng.random() * float(d - c)) for _ in range(m)]

    def _screen_hyperplanes(self, rng) -> None:
        n = self.n
        pts = self.evaluate(np.array(self._random_params(rng, 2 * n + 3)))
        D = pts[1:] - pts[0]
        sv = np.linalg.svd(D, compute_uv=False)
        if sv[-1] > 1e-9 * max(sv[0], 1.0) and D.shape[0] >= n:
            return
        H = self.screen_height
        import itertools

        for a in itertools.product(range(-H, H + 1), repeat=n):
            nz = [c for c in a if c]
            if not nz or nz[0] < 0 or math.gcd(*a) != 1:
                continue
            av = np.asarray(a, dtype=float)
            if np.max(np.abs(D @ av)) <= 1e-9 * np.linalg.norm(av) * max(1.0, np.abs(D).max()):
                c = float(pts[0] @ av)
                cf = Fraction(c).limit_denominator(10**6)
                if abs(float(cf) - c) < 1e-9:
                    raise SurfaceError(f"surface lies in the rational affine hyperplane {list(a)} . x = {cf}")

    def evaluate(self, params: np.ndarray) -> np.ndarray:
        params = np.atleast_2d(np.asarray(params, dtype=float))
        cols = [np.broadcast_to(np.asarray(f(params[:, 0], params[:, 1]), dtype=float), (params.shape[0],)) for f in self._numeric]
        return np.stack(cols, axis=1)

    def evaluate_exact(self, u: Fraction, v: Fraction, digits: int = X_DIGITS + 10) -> tuple[Fraction, ...]:
        """Chart value at rational parameters; exact unless the chart has irrational constants."""
        out = []
        su, sv = sympy.Rational(u.numerator, u.denominator), sympy.Rational(v.numerator, v.denominator)
        for e in self.exprs:
            val = e.subs({U: su, V: sv})
            if val.is_Rational:
                out.append(Fraction(int(val.p), int(val.q)))
            else:
                out.append(Fraction(str(sympy.N(val, digits))))
        return tuple(out)

    def interval_dot(self, box: ParamBox, vec: Sequence[int]) -> Interval:
        """Enclosure of ``<f(u, v), vec>`` over the closed box."""
        env = {U: Interval(*box.interval(0)), V: Interval(*box.interval(1))}
        total = Interval.point(0)
        for e, c in zip(self._expanded, vec):
            if c:
                total = total + evaluate_interval(e, env).scale(int(c))
        return total


@dataclass(frozen=True)
class LevelSet:
    """Slice ``{x in M : x_coord = level}``; ``coord`` is 1-based."""

    coord: int
    level: Fraction
    index: int = 0
    rank: int = 0  # 0 for the k coordinate, 1 for l

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.level.denominator, self.level.numerator, self.rank)

    def to_dict(self) -> dict:
        return {"coord": self.coord, "level": str(self.level), "index": self.index}


def level_family(M: SurfaceSpec, H: int, region: ParamBox | Sequence[tuple] | None = None) -> list[LevelSet]:
    """All slices ``x_k = a/b`` and ``x_l = a/b`` with ``b <= H`` meeting the closed region.

    Farey ordered: denominator, then numerator, then k before l.
    """
    if H < 1:
        raise ValueError("H must be >= 1")
    if region is None:
        ivs = [tuple(M.domain[0]), tuple(M.domain[1])]
    elif isinstance(region, ParamBox):
        ivs = [region.interval(0), region.interval(1)]
    else:
        ivs = [(exact(a), exact(b)) for a, b in region]
    out = []
    for rank, (coord, (lo, hi)) in enumerate(zip(M.coords, ivs)):
        for s in rationals_in(lo, hi, H):
            out.append(LevelSet(coord, s, 0, rank))
    out.sort(key=lambda ls: ls.key)
    out = [LevelSet(ls.coord, ls.level, i, ls.rank) for i, ls in enumerate(out)]
    if not out:
        raise ValueError("empty level family: region too small for this height")
    return out


def escape_subspace(ls: LevelSet, M: SurfaceSpec | int) -> RationalSubspace:
    """``W = {w : q w_k + p w_{n+1} = 0}`` for the level ``s = p/q``."""
    n = M if isinstance(M, int) else M.n
    p, q = ls.level.numerator, ls.level.denominator
    row = [0] * (n + 1)
    row[ls.coord - 1] = q
    row[n] = p
    return saturate(integer_kernel([row]))


# ---------------------------------------------------------------------------
# Schedules


@dataclass(frozen=True)
class DeltaSchedule:
    """``delta(T)`` as a sympy expression in T; ``psi(t) = delta(e^t)``."""

    expr: str = "1/log(T + E)"

    @property
    def _sym(self):
        T = sympy.Symbol("T", positive=True)
        return T, sympy.sympify(self.expr, locals={"T": T, "E": sympy.E})

    def delta(self, T):
        Ts, e = self._sym
        f = sympy.lambdify(Ts, e, "numpy")
        return np.asarray(f(np.asarray(T, dtype=float)), dtype=float)

    def psi(self, t):
        return self.delta(np.exp(np.asarray(t, dtype=float)))

    def check(self, rho: float, grid: Sequence[float]) -> dict:
        """Validity report: strictly decreasing on the grid and ``T^rho delta(T) -> infinity``.

        ``tail_increasing_on_grid`` reports whether ``T^rho delta(T)`` already
        increases over the last grid points; it is informational, since the
        hypothesis is about the limit.
        """
        g = np.asarray(grid, dtype=float)
        d = self.delta(g)
        decreasing = bool(np.all(d > 0) and np.all(np.diff(d) < 0))
        Ts, e = self._sym
        rho_q = sympy.Rational(str(Fraction(rho).limit_denominator(10**6)))
        try:
            lim = sympy.limit(Ts**rho_q * e, Ts, sympy.oo)
            limit_infinite = bool(lim == sympy.oo)
        except (NotImplementedError, ValueError):
            limit_infinite = False
        growth = g**rho * d
        tail = growth[len(growth) // 2 :]
        return {
            "rho": rho,
            "decreasing_on_grid": decreasing,
            "growth_limit_infinite": limit_infinite,
            "tail_increasing_on_grid": bool(np.all(np.diff(tail) > 0)),
            "valid": decreasing and limit_infinite,
        }


# ---------------------------------------------------------------------------
# Escape-rate bound


@dataclass(frozen=True)
class EscapeRateBound:
    C: float
    rho: float
    t0: float
    slice_rho: float
    covolume_bound: float


def _unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def _slice_points(ls: LevelSet, M: SurfaceSpec, box: ParamBox, m: int) -> list[tuple[Fraction, Fraction]]:
    free = 1 - ls.rank
    lo, hi = box.interval(free)
    pts = []
    for j in range(m):
        val = lo + (hi - lo) * Fraction(j, m - 1)
        p = [None, None]
        p[ls.rank] = ls.level
        p[free] = val
        pts.append((p[0], p[1]))
    return pts


def escape_rate_bound(ls: LevelSet, M: SurfaceSpec, neighborhood: ParamBox, r, schedule: DeltaSchedule | None = None,
                      check_times: Sequence[float] = tuple(np.linspace(0.0, 20.0, 21))) -> EscapeRateBound:
    """Minkowski bound on the shortest vector along a level set.

    On the slice ``x_k = p/q`` the sublattice ``g_t tau(z) (W cap Z^{n+1})``
    has covolume ``e^{-r_k t} ell_W(tau(z))``, so it contains a nonzero
    vector of length at most ``C e^{-r_k t / n}`` with
    ``C = 2 (max ell_W(tau(z)) / V_n)^{1/n}``. The reported ``rho`` is
    ``min(r_k, r_l) / n``, which is never larger than the slice's own rate.
    ``t0`` is the first time after which ``C e^{-rho t} < psi(t)`` (0 when
    no schedule is given). The bound is checked against exact systoles on
    a grid of slice points and times; a violation raises
    :class:`BoundViolationError`.
    """
    w = as_weights(r)
    n = M.n
    if w.n != n:
        raise ValueError("weight vector length must match the ambient dimension")
    W = escape_subspace(ls, M)
    lo, hi = neighborhood.interval(ls.rank)
    if not lo <= ls.level <= hi:
        raise ValueError("neighborhood does not meet the level set")
    pts = _slice_points(ls, M, neighborhood, 65)
    covol = max(ell_V(tau([float(c) for c in M.evaluate_exact(*p)]), W) for p in pts) * (1 + 1e-6)
    C = 2.0 * (covol / _unit_ball_volume(n)) ** (1.0 / n)
    k, l = M.coords
    rho = min(w.r[k - 1], w.r[l - 1]) / n
    slice_rho = w.r[ls.coord - 1] / n
    for p in _slice_points(ls, M, neighborhood, 5):
        z = M.evaluate_exact(*p)
        for t in check_times:
            s = systole(UnimodularLattice.from_flow(z, w, float(t))).length
            if s > C * math.exp(-slice_rho * float(t)) * (1 + 1e-9):
                raise BoundViolationError(f"systole {s} exceeds C e^(-rho t) at z={p}, t={t}")
    t0 = 0.0
    if schedule is not None:
        ts = np.linspace(0.0, 400.0, 40001)
        bad = C * np.exp(-rho * ts) >= schedule.psi(ts)
        idx = np.flatnonzero(bad)
        if len(idx) == len(ts):
            t0 = math.inf
        elif len(idx):
            t0 = float(ts[idx[-1] + 1])
    return EscapeRateBound(C, rho, t0, slice_rho, covol)


# ---------------------------------------------------------------------------
# Construction


@dataclass
class StepRecord:
    step: int
    level_set: LevelSet
    box: ParamBox
    T_start: float
    T_end: float
    eta: Fraction | None
    probes: int

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "level_set": self.level_set.to_dict(),
            "box": self.box.to_dict(),
            "T_start": self.T_start,
            "T_end": self.T_end,
            "eta": None if self.eta is None else str(self.eta),
            "probes": self.probes,
        }


@dataclass
class ConstructionState:
    """Certificate of a finite-depth nested construction."""

    surface: str
    r: tuple[float, ...]
    schedule: str
    depth: int
    grid: tuple[float, ...]
    T: tuple[float, ...]
    steps: list[StepRecord]
    release_box: ParamBox | None
    x: tuple[str, ...]
    exclusion_height: int
    x_prime_checked: int
    avoid_points: tuple[tuple[str, ...], ...]
    rho: float
    schedule_check: dict
    margin: float
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def T1(self) -> float:
        return self.T[0]

    @property
    def T_max(self) -> float:
        return self.T[-1]

    def to_dict(self) -> dict:
        return {
            "x": list(self.x),
            "surface": self.surface,
            "r": list(self.r),
            "schedule": self.schedule,
            "depth": self.depth,
            "grid": list(self.grid),
            "T": list(self.T),
            "T1": self.T1,
            "T_max": self.T_max,
            "rho": self.rho,
            "schedule_check": self.schedule_check,
            "margin": self.margin,
            "exclusion_height": self.exclusion_height,
            "x_prime_checked": self.x_prime_checked,
            "avoid_points": [list(p) for p in self.avoid_points],
            "steps": [s.to_dict() for s in self.steps],
            "release_box": None if self.release_box is None else self.release_box.to_dict(),
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _x_prime_vectors(n: int, H: int, coords: tuple[int, int]) -> list[tuple[int, ...]]:
    import itertools

    # multiples of e_k or e_l define the slices themselves, which belong to the X list
    own = [{c - 1} for c in coords]
    out = []
    for v in itertools.product(range(-H, H + 1), repeat=n):
        support = {i for i, a in enumerate(v) if a}
        if not support or v[min(support)] < 0 or support in own:
            continue
        out.append(v)
    return out


class _Builder:
    def __init__(self, M: SurfaceSpec, w: WeightVector, schedule: DeltaSchedule, grid, T_max, H_exclude, avoid, margin):
        self.M = M
        self.w = w
        self.schedule = schedule
        self.grid = list(grid)
        self.T_max = float(T_max)
        self.H = H_exclude
        self.margin = margin
        self.avoid = [tuple(exact_vector(p)) for p in avoid]
        self.avoid_params = []
        k, l = M.coords
        for p in self.avoid:
            if len(p) != M.n:
                raise ValueError("avoid points must have n coordinates")
            self.avoid_params.append((p[k - 1], p[l - 1]))
        self.xprime = _x_prime_vectors(M.n, H_exclude, M.coords) if H_exclude > 0 else []
        self.probes = 0

    # -- probes -------------------------------------------------------------
    def times(self, Ta: float, Tb: float) -> np.ndarray:
        if Tb < Ta:
            return np.array([])
        ts = set(float(T) for T in self.grid if Ta <= T <= Tb)
        ts.update(np.geomspace(Ta, Tb, PROBE_TIMES).tolist())
        return np.log(np.array(sorted(ts)))

    def escapes(self, params: np.ndarray, Ta: float, Tb: float) -> bool:
        X = self.M.evaluate(params)
        for t in self.times(Ta, Tb):
            cap = (1.0 - self.margin) * float(self.schedule.psi(t))
            lengths, _ = flow_systole_scan(X, self.w, t, cap, norm="sup")
            self.probes += len(X)
            if not np.all(np.isfinite(lengths)):
                return False
        return True

    def slice_params(self, ls: LevelSet, box: ParamBox) -> np.ndarray:
        return np.array([(float(a), float(b)) for a, b in _slice_points(ls, self.M, box, PROBE_GRID)])

    # -- exclusions ---------------------------------------------------------
    def avoids_earlier_slices(self, box: ParamBox, key: tuple, allow: LevelSet | None) -> bool:
        """No slice with key < ``key`` meets the closed box, except ``allow`` itself."""
        for rank in (0, 1):
            lo, hi = box.interval(rank)
            s = simplest_rational(lo, hi)
            first = (s.denominator, s.numerator, rank)
            if allow is not None and rank == allow.rank:
                if s != allow.level:
                    return False
                continue
            if first <= key:
                return False
        return True

    def avoids_x_prime(self, box: ParamBox) -> bool:
        for v in self.xprime:
            iv = self.M.interval_dot(box, v)
            s = simplest_rational(iv.lo, iv.hi)
            if s.denominator <= self.H:
                return False
        return True

    def avoids_points(self, box: ParamBox) -> bool:
        return not any(box.contains_closed(p) for p in self.avoid_params)

    def admissible(self, box: ParamBox, key: tuple, allow: LevelSet | None, xprime: bool) -> bool:
        if not self.avoids_earlier_slices(box, key, allow):
            return False
        if xprime and not self.avoids_x_prime(box):
            return False
        return self.avoids_points(box)


def _schedule_times(grid: Sequence[float], T1: float, T_max: float, depth: int) -> list[float]:
    g = [T for T in grid if T1 <= T <= T_max]
    out = []
    for j in range(depth):
        target = T1 * (T_max / T1) ** (j / (depth - 1))
        snapped = min(g, key=lambda T: (abs(math.log(T / target)), T))
        out.append(max(snapped, out[-1]) if out else snapped)
    out[0], out[-1] = T1, T_max
    return out


def construct(
    M: SurfaceSpec,
    r,
    schedule: DeltaSchedule | None = None,
    depth: int = 6,
    grid: Sequence[float] | None = None,
    H_exclude: int = 12,
    avoid: Sequence[Sequence] = (),
    T_max: float = 1e3,
    margin: float = DEFAULT_MARGIN,
    max_halvings: int = 24,
) -> tuple[tuple[Fraction, ...], ConstructionState]:
    """Run the nested refinement to ``depth`` steps and return ``(x, state)``.

    The escape ``g_t tau(x) Z^{n+1} not in K_{psi(t)}`` is certified on the
    finite window ``[T_1, T_max]`` only.

    Raises
    ------
    SurfaceError
        The chart fails screening (dimension, graph form, rational hyperplane).
    RefinementStallError
        No admissible box was found for some step.
    """
    M.validate()
    w = as_weights(r)
    if w.n != M.n:
        raise ValueError("weight vector length must match the ambient dimension")
    if depth < 2:
        raise ValueError("depth must be >= 2")
    schedule = schedule or DeltaSchedule()
    grid = list(default_grid(2.0, T_max) if grid is None else grid)
    T_max = float(grid[-1]) if grid[-1] < T_max else float(T_max)
    k, l = M.coords
    rho = min(w.r[k - 1], w.r[l - 1]) / M.n
    check = schedule.check(rho, grid)
    if not check["valid"]:
        raise ValueError(f"schedule fails the growth/monotonicity check: {check}")
    if float(schedule.psi(0.0)) > 1.0:
        raise ValueError("psi must not exceed 1")
    b = _Builder(M, w, schedule, grid, T_max, H_exclude, avoid, margin)

    # step 1: first slice of the domain and its anchor crossing
    dom = M.domain
    firsts = []
    for rank in (0, 1):
        s = simplest_in_open(*dom[rank])
        firsts.append(LevelSet(M.coords[rank], s, 0, rank))
    S = min(firsts, key=lambda ls: ls.key)
    other = firsts[1 - S.rank]
    anchor = [None, None]
    anchor[S.rank], anchor[other.rank] = S.level, other.level
    anchor_params = np.array([[float(anchor[0]), float(anchor[1])]])
    T1 = None
    for T in grid:
        if b.escapes(anchor_params, T, T_max):
            T1 = float(T)
            break
    if T1 is None:
        raise RefinementStallError("the first crossing point never escapes on the grid")
    Ts = _schedule_times(grid, T1, T_max, depth)

    half0 = min(min(anchor[i] - dom[i][0], dom[i][1] - anchor[i]) for i in range(2)) / 3
    box = None
    for j in range(max_halvings):
        cand = ParamBox((anchor[0], anchor[1]), half0 / 2**j)
        if not all(dom[i][0] < cand.center[i] - cand.half and cand.center[i] + cand.half < dom[i][1] for i in range(2)):
            continue
        if not b.admissible(cand, S.key, S, xprime=False):
            continue
        if b.escapes(b.slice_params(S, cand), Ts[0], T_max):
            box = cand
            break
    if box is None:
        raise RefinementStallError("no admissible first box around the anchor point")
    steps = [StepRecord(1, S, box, Ts[0], T_max, None, b.probes)]

    for step in range(2, depth + 1):
        prev, prev_box = steps[-1].level_set, steps[-1].box
        orank = 1 - prev.rank
        lo, hi = prev_box.interval(orank)
        s_new = simplest_in_open(lo, hi)
        S_new = LevelSet(M.coords[orank], s_new, 0, orank)
        if S_new.key <= prev.key:
            raise RefinementStallError("density step produced a level set out of order")
        T_a, T_b = Ts[step - 2], Ts[step - 1]
        accepted = None
        for j in range(1, max_halvings):
            eta = prev_box.half / 2**j
            for sign in (1, -1):
                center = [None, None]
                center[prev.rank] = prev.level + sign * eta
                center[orank] = s_new
                off = abs(s_new - prev_box.center[orank])
                hmax = min(prev_box.half / 3, eta / 2, (prev_box.half - eta) / 2, (prev_box.half - off) / 2)
                if hmax <= 0:
                    continue
                for i in range(max_halvings):
                    cand = ParamBox((center[0], center[1]), hmax / 2**i)
                    if not cand.closure_inside(prev_box):
                        continue
                    if not b.admissible(cand, S_new.key, S_new, xprime=True):
                        continue
                    if not b.escapes(cand.grid(), T_a, T_b):
                        continue
                    if not b.escapes(b.slice_params(S_new, cand), T_b, T_max):
                        continue
                    accepted = (cand, eta)
                    break
                if accepted:
                    break
            if accepted:
                break
        if accepted is None:
            raise RefinementStallError(f"no admissible box at step {step}; enlarge the region or the height budget")
        steps.append(StepRecord(step, S_new, accepted[0], T_a, T_b, accepted[1], b.probes))

    # release: leave the last level set at an irrational-looking offset
    last, last_box = steps[-1].level_set, steps[-1].box
    golden = Fraction("0.61803398874989484820458683436563811772030917980576")
    silver = Fraction("0.41421356237309504880168872420969807856967187537694")
    release = None
    x_params = None
    for j in range(max_halvings):
        scale = last_box.half / 3 / 2**j
        center = [None, None]
        center[last.rank] = last.level + golden * scale
        center[1 - last.rank] = last_box.center[1 - last.rank] + silver * scale
        center = [Fraction(format_decimal(c)) for c in center]
        cand = ParamBox((center[0], center[1]), scale / 4)
        if not cand.closure_inside(last_box):
            continue
        if not b.admissible(cand, last.key, None, xprime=True):
            continue
        if not b.escapes(cand.grid(), Ts[0], T_max):
            continue
        release, x_params = cand, center
        break
    if release is None:
        raise RefinementStallError("no admissible release box off the last level set")
    x = tuple(Fraction(format_decimal(c)) for c in M.evaluate_exact(x_params[0], x_params[1]))
    state = ConstructionState(
        surface=M.describe(),
        r=w.r,
        schedule=schedule.expr,
        depth=depth,
        grid=tuple(float(T) for T in grid),
        T=tuple(Ts),
        steps=steps,
        release_box=release,
        x=tuple(format_decimal(c) for c in x),
        exclusion_height=H_exclude,
        x_prime_checked=len(b.xprime),
        avoid_points=tuple(tuple(str(c) for c in p) for p in b.avoid),
        rho=rho,
        schedule_check=check,
        margin=margin,
        notes=(
            f"finite horizon: escape certified on [T1, T_max] = [{Ts[0]:g}, {T_max:g}] only",
            f"probe-grid margin {margin:g} is a heuristic stand-in for the local-uniformity neighborhood",
            f"exclusion list truncated at height {H_exclude}",
        ),
    )
    return x, state


# ---------------------------------------------------------------------------
# Verification


@dataclass
class VerificationReport:
    x: tuple[str, ...]
    checked: list[float]
    failures: list[dict]

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {"x": list(self.x), "checked": self.checked, "failures": self.failures, "passed": self.passed}


def verify_certificate(x, r, schedule: DeltaSchedule | None = None, grid: Sequence[float] | None = None, T1: float | None = None) -> VerificationReport:
    """Check escape and the matching Diophantine witness at every grid T >= T1.

    For each such T with ``t = log T``: the sup-norm systole of
    ``g_t tau(x) Z^{n+1}`` must be below ``psi(t)``, and a witness for the
    weighted system with ``delta = delta(T)`` must exist. Since ``psi <= 1``
    and ``e^{t min r} >= 1``, the lattice condition implies the witness with
    no adjustment of delta.
    """
    w = as_weights(r)
    xs = exact_vector(x)
    schedule = schedule or DeltaSchedule()
    grid = list(default_grid(2.0, 1e3) if grid is None else grid)
    T1 = grid[0] if T1 is None else T1
    failures, checked = [], []
    for T in grid:
        if T < T1:
            continue
        t = math.log(T)
        psi = float(schedule.psi(t))
        checked.append(float(T))
        s = systole(UnimodularLattice.from_flow(xs, w, t), norm="sup")
        if not s.length < psi:
            failures.append({"T": float(T), "check": "systole", "value": s.length, "bound": psi})
        wit = find_witness(xs, w, T, float(schedule.delta(T)))
        if wit is None:
            failures.append({"T": float(T), "check": "witness", "delta": float(schedule.delta(T))})
    return VerificationReport(tuple(str(c) for c in xs), checked, failures)
