"""Diagonal flows on the space of unimodular lattices.

The lattice attached to ``x`` at time ``t`` is ``g_t tau(x) Z^{n+1}`` where
``g_t = diag(e^{r_1 t}, ..., e^{r_n t}, e^{-t})`` and ``tau(x)`` is the
unipotent matrix with ``x`` in its last column. Its systole (shortest
nonzero vector) decides membership in the Mahler sets ``K_eps``.

Shortest vectors are found by LLL reduction (exchange factor 0.99)
followed by Fincke-Pohst enumeration inside the ball bounded by the first
reduced vector, so the returned minimum is exact up to floating error.
When ``t * max(r) > 25`` the computation switches to mpmath with enough
bits to absorb the ``e^{r_i t}`` dynamic range.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import mpmath
import numpy as np

from .exceptions import EnumerationBudgetError
from .lattice import RationalSubspace, wedge_float
from .numbers import exact as _exact, exact_vector
from .weights import WeightVector, as_weights

__all__ = [
    "flow_matrix",
    "tau",
    "Provenance",
    "UnimodularLattice",
    "Systole",
    "lll_reduce",
    "systole",
    "in_K_eps",
    "ell_V",
    "h_matrix",
    "TrajectoryProfile",
    "trajectory",
    "gamma_exponent",
    "flow_systole_scan",
    "EXTENDED_PRECISION_THRESHOLD",
]

EXTENDED_PRECISION_THRESHOLD = 25.0
LLL_DELTA = 0.99
DEFAULT_NODE_BUDGET = 1_000_000
_CERT_SLACK = 1e-9
_TIE_RTOL = 1e-12


def flow_matrix(r, t: float) -> np.ndarray:
    """``diag(e^{r_1 t}, ..., e^{r_n t}, e^{-t})`` as a float array."""
    w = as_weights(r)
    return np.diag(np.exp(w.exponents() * float(t)))


def tau(x: Sequence, exact: bool = False) -> np.ndarray:
    """Unipotent matrix ``[[I_n, x], [0, 1]]``.

    With ``exact=True`` the entries are :class:`fractions.Fraction` in an
    object array, so products are exact.
    """
    n = len(x)
    if exact:
        m = np.empty((n + 1, n + 1), dtype=object)
        for i in range(n + 1):
            for j in range(n + 1):
                m[i, j] = Fraction(int(i == j))
        for i, xi in enumerate(x):
            m[i, n] = _exact(xi)
        return m
    m = np.eye(n + 1)
    m[:n, n] = np.asarray(x, dtype=float)
    return m


def h_matrix(x: Sequence[float], r, t: float) -> np.ndarray:
    """``g_t tau(x)``."""
    return flow_matrix(r, t) @ tau(x)


@dataclass(frozen=True)
class Provenance:
    """Exact generator record (x, r, t) of a lattice ``g_t tau(x) Z^{n+1}``."""

    x: tuple[Fraction, ...]
    r: WeightVector
    t: float

    def to_dict(self) -> dict:
        return {"x": [str(c) for c in self.x], "r": list(self.r.r), "t": self.t}


def _auto_precision(r: WeightVector, t: float) -> int | None:
    stretch = abs(t) * r.max_weight
    if stretch <= EXTENDED_PRECISION_THRESHOLD:
        return None
    return max(128, 64 + int(math.ceil(2.0 * (1.0 + r.max_weight) * abs(t) / math.log(2))))


@dataclass(frozen=True, eq=False)
class UnimodularLattice:
    """A determinant-one lattice ``basis @ Z^{n+1}`` (basis vectors are columns).

    Lattices built with :meth:`from_flow` keep their generator ``(x, r, t)``
    and compute lattice vectors from it directly, which avoids the
    cancellation in ``q x_i - p_i`` that a float basis would suffer.
    """

    basis: np.ndarray
    provenance: Provenance | None = None
    precision: int | None = None

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim != 2 or b.shape[0] != b.shape[1] or b.shape[0] < 2:
            raise ValueError("basis must be a square matrix of size >= 2")
        object.__setattr__(self, "basis", b)
        if self.provenance is None:
            det = np.linalg.det(b)
            if abs(det - 1.0) > 1e-9:
                raise ValueError(f"basis is not unimodular (det = {det!r})")

    @classmethod
    def from_flow(cls, x: Sequence, r, t: float, precision: int | str | None = "auto") -> "UnimodularLattice":
        w = as_weights(r)
        xs = exact_vector(x)
        if len(xs) != w.n:
            raise ValueError("x and r have different lengths")
        if precision == "auto":
            precision = _auto_precision(w, float(t))
        with np.errstate(over="ignore"):
            basis = flow_matrix(w, t) @ tau([float(c) for c in xs])
        if not np.all(np.isfinite(basis)):
            basis = np.eye(w.n + 1)
        return cls(basis, Provenance(xs, w, float(t)), precision)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def embedder(self) -> Callable[[Sequence[int]], list]:
        """Map integer coefficient vectors to lattice vectors at working precision."""
        prov = self.provenance
        if prov is None:
            if self.precision is None:
                b = self.basis
                return lambda c: list(b @ np.asarray(c, dtype=float))
            bm = [[mpmath.mpf(float(v)) for v in row] for row in self.basis]
            return lambda c: [mpmath.fsum(bm[i][j] * c[j] for j in range(len(c))) for i in range(len(bm))]
        n = len(prov.x)
        nums = [c.numerator for c in prov.x]
        dens = [c.denominator for c in prov.x]
        if self.precision is None:
            scales = [math.exp(ri * prov.t) for ri in prov.r.r] + [math.exp(-prov.t)]

            def embed(c):
                last = c[n]
                out = [scales[i] * ((c[i] * dens[i] + nums[i] * last) / dens[i]) for i in range(n)]
                out.append(scales[n] * last)
                return out

            return embed
        tm = mpmath.mpf(prov.t)
        scales = [mpmath.exp(mpmath.mpf(ri) * tm) for ri in prov.r.r] + [mpmath.exp(-tm)]

        def embed_mp(c):
            last = c[n]
            out = [scales[i] * mpmath.mpf(c[i] * dens[i] + nums[i] * last) / dens[i] for i in range(n)]
            out.append(scales[n] * last)
            return out

        return embed_mp


# ---------------------------------------------------------------------------
# Reduction and enumeration


class _Arith:
    """Scalar helpers for either float or mpmath working precision."""

    def __init__(self, precise: bool):
        self.precise = precise
        if precise:
            self.sqrt = mpmath.sqrt
            self.zero = mpmath.mpf(0)
        else:
            self.sqrt = math.sqrt
            self.zero = 0.0

    def floor(self, v) -> int:
        return int(mpmath.floor(v)) if self.precise else math.floor(v)

    def ceil(self, v) -> int:
        return int(mpmath.ceil(v)) if self.precise else math.ceil(v)

    def round(self, v) -> int:
        return int(mpmath.nint(v)) if self.precise else round(v)


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def _gs(vecs, ar: _Arith):
    d = len(vecs)
    bstar: list[list] = []
    bn: list = []
    mu = [[ar.zero] * d for _ in range(d)]
    for i in range(d):
        v = list(vecs[i])
        for j in range(i):
            mu[i][j] = _dot(vecs[i], bstar[j]) / bn[j] if bn[j] else ar.zero
            v = [a - mu[i][j] * b for a, b in zip(v, bstar[j])]
        bstar.append(v)
        bn.append(_dot(v, v))
    return bstar, bn, mu


def _lll(coeffs: list[list[int]], embed, ar: _Arith, delta: float = LLL_DELTA, max_iter: int = 100_000):
    d = len(coeffs)
    vecs = [embed(c) for c in coeffs]
    bstar: list = [None] * d
    bn: list = [None] * d
    mu = [[ar.zero] * d for _ in range(d)]

    def gs_row(k):
        v = list(vecs[k])
        for j in range(k):
            mu[k][j] = _dot(vecs[k], bstar[j]) / bn[j] if bn[j] else ar.zero
            v = [a - mu[k][j] * b for a, b in zip(v, bstar[j])]
        bstar[k] = v
        bn[k] = _dot(v, v)

    gs_row(0)
    k = 1
    it = 0
    while k < d:
        it += 1
        if it > max_iter:
            raise EnumerationBudgetError("LLL did not converge; raise the working precision")
        gs_row(k)
        changed = False
        for j in range(k - 1, -1, -1):
            if abs(mu[k][j]) > 0.5:
                f = ar.round(mu[k][j])
                coeffs[k] = [a - f * b for a, b in zip(coeffs[k], coeffs[j])]
                changed = True
                for i in range(j + 1):
                    mu[k][i] -= f * (mu[j][i] if i < j else 1)
        if changed:
            vecs[k] = embed(coeffs[k])
            gs_row(k)
        if bn[k] >= (delta - mu[k][k - 1] ** 2) * bn[k - 1]:
            k += 1
        else:
            coeffs[k], coeffs[k - 1] = coeffs[k - 1], coeffs[k]
            vecs[k], vecs[k - 1] = vecs[k - 1], vecs[k]
            gs_row(k - 1)
            k = max(k - 1, 1)
    return coeffs, vecs


def lll_reduce(L: UnimodularLattice, delta: float = LLL_DELTA) -> list[tuple[int, ...]]:
    """LLL-reduced basis of ``L`` as integer coefficient vectors w.r.t. ``L.basis``."""
    ar = _Arith(L.precision is not None)
    coeffs = [[int(i == j) for j in range(L.dim)] for i in range(L.dim)]
    if L.precision is None:
        reduced, _ = _lll(coeffs, L.embedder(), ar, delta)
    else:
        with mpmath.workprec(L.precision):
            reduced, _ = _lll(coeffs, L.embedder(), ar, delta)
    return [tuple(c) for c in reduced]


def _enumerate(bn, mu, r2, ar: _Arith, budget: int) -> list[tuple[int, ...]]:
    d = len(bn)
    c = [0] * d
    found: list[tuple[int, ...]] = []
    nodes = 0

    def rec(j, partial):
        nonlocal nodes
        center = -sum(c[i] * mu[i][j] for i in range(j + 1, d))
        rem = r2 - partial
        if rem < 0 or not bn[j]:
            return
        rad = ar.sqrt(rem / bn[j])
        for v in range(ar.ceil(center - rad), ar.floor(center + rad) + 1):
            nodes += 1
            if nodes > budget:
                raise EnumerationBudgetError(f"enumeration exceeded {budget} nodes")
            c[j] = v
            val = partial + bn[j] * (v - center) ** 2
            if val <= r2:
                if j == 0:
                    found.append(tuple(c))
                else:
                    rec(j - 1, val)
        c[j] = 0

    rec(d - 1, ar.zero)
    return found


def _normalize_sign(v: tuple[int, ...]) -> tuple[int, ...]:
    for a in v:
        if a:
            return v if a > 0 else tuple(-b for b in v)
    return v


@dataclass(frozen=True)
class Systole:
    """Shortest nonzero vector of a lattice.

    ``witness`` holds integer coefficients with respect to the lattice basis;
    for flow lattices these are the vectors ``(-p, q)`` of Z^{n+1}.
    """

    length: float
    witness: tuple[int, ...]
    norm: str = "euclidean"

    def __iter__(self):
        yield self.length
        yield self.witness


def _norm(vec, kind: str, ar: _Arith):
    if kind == "sup":
        return max(abs(a) for a in vec)
    return ar.sqrt(_dot(vec, vec))


def _systole_impl(L: UnimodularLattice, norm: str, budget: int) -> Systole:
    ar = _Arith(L.precision is not None)
    embed = L.embedder()
    coeffs = [[int(i == j) for j in range(L.dim)] for i in range(L.dim)]
    coeffs, vecs = _lll(coeffs, embed, ar)
    _, bn, mu = _gs(vecs, ar)
    if norm == "sup":
        bound = min(_norm(v, "sup", ar) for v in vecs)
        radius = bound * math.sqrt(L.dim)
    else:
        radius = ar.sqrt(bn[0])
    radius = radius * (1 + _CERT_SLACK)
    candidates = _enumerate(bn, mu, radius * radius, ar, budget)
    best = None
    scored = []
    for c in candidates:
        if not any(c):
            continue
        orig = tuple(sum(ci * coeffs[i][j] for i, ci in enumerate(c)) for j in range(L.dim))
        orig = _normalize_sign(orig)
        length = _norm(embed(orig), norm, ar)
        scored.append((length, orig))
        if best is None or length < best:
            best = length
    if best is None:
        # the first reduced vector always lies in the ball; only reachable through rounding
        orig = _normalize_sign(tuple(coeffs[0]))
        return Systole(float(_norm(embed(orig), norm, ar)), orig, norm)
    ties = [v for length, v in scored if length <= best * (1 + _TIE_RTOL)]
    return Systole(float(best), min(ties), norm)


def systole(L: UnimodularLattice, norm: str = "euclidean", budget: int = DEFAULT_NODE_BUDGET) -> Systole:
    """Length and coefficient vector of the shortest nonzero vector of ``L``.

    Parameters
    ----------
    norm : {"euclidean", "sup"}
    budget : int
        Maximum number of enumeration nodes before
        :class:`~singlat.exceptions.EnumerationBudgetError` is raised.
    """
    if norm not in ("euclidean", "sup"):
        raise ValueError(f"unknown norm {norm!r}")
    if L.precision is None:
        return _systole_impl(L, norm, budget)
    with mpmath.workprec(L.precision):
        return _systole_impl(L, norm, budget)


def in_K_eps(L: UnimodularLattice, eps: float, norm: str = "euclidean") -> bool:
    """True when every nonzero vector of ``L`` has norm >= eps (closed condition)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return systole(L, norm).length >= eps


def ell_V(g: np.ndarray, V: RationalSubspace) -> float:
    """Norm of ``g (v_1 ^ ... ^ v_k)`` for a saturated basis of V."""
    g = np.asarray(g, dtype=float)
    vs = np.asarray(V.basis, dtype=float)
    return float(np.linalg.norm(wedge_float(vs @ g.T)))


def gamma_exponent(r, k: int) -> float:
    """Rate of the smallest eigenvalue ``e^{gamma t}`` of g_t on the k-th exterior power of V0."""
    w = as_weights(r)
    if not 1 <= k <= w.n:
        raise ValueError(f"k must lie in [1, {w.n}]")
    return math.fsum(sorted(w.r)[:k])


# ---------------------------------------------------------------------------
# Structured search over q (independent of reduction)


def flow_systole_scan(X: np.ndarray, r, t: float, cap: float, norm: str = "euclidean") -> tuple[np.ndarray, np.ndarray]:
    """Systoles of ``g_t tau(x) Z^{n+1}`` for many x at once, truncated at ``cap``.

    For ``t >= 0`` every lattice vector is ``(e^{r_i t}(q x_i - p_i), e^{-t} q)``
    and, for fixed q, the nearest integer vector ``p`` is optimal in each
    coordinate. Vectors with ``q >= cap e^t`` are never shorter than ``cap``,
    so scanning ``0 <= q < cap e^t`` is exhaustive below the cap.

    Returns ``(lengths, q)``; entries with no vector shorter than ``cap``
    report ``inf`` and ``q = -1``.
    """
    w = as_weights(r)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != w.n:
        raise ValueError("points must have len(r) coordinates")
    if t < 0:
        raise ValueError("structured scan requires t >= 0")
    scales = np.exp(w.as_array() * t)
    m = X.shape[0]
    best = np.full(m, np.inf)
    best_q = np.full(m, -1, dtype=np.int64)
    horizontal = float(scales.min())
    if horizontal < cap:
        best[:] = horizontal
        best_q[:] = 0
    qmax = int(math.ceil(cap * math.exp(t))) - 1
    for q in range(1, qmax + 1):
        y = q * X
        d = np.abs(y - np.rint(y)) * scales
        tail = q * math.exp(-t)
        if norm == "sup":
            val = np.maximum(d.max(axis=1), tail)
        else:
            val = np.sqrt(np.sum(d * d, axis=1) + tail * tail)
        better = val < best
        best = np.where(better, val, best)
        best_q = np.where(better, q, best_q)
    best = np.where(best < cap, best, np.inf)
    best_q = np.where(np.isfinite(best), best_q, -1)
    return best, best_q


# ---------------------------------------------------------------------------
# Trajectories


@dataclass(frozen=True)
class TrajectoryProfile:
    """Systole and shortest vector of ``g_t tau(x) Z^{n+1}`` at sampled times."""

    times: tuple[float, ...]
    systoles: tuple[float, ...]
    shortest_vectors: tuple[tuple[int, ...], ...]
    norm: str = "euclidean"
    x: tuple[str, ...] = field(default=())
    r: tuple[float, ...] = field(default=())

    CSV_HEADER = ("t", "systole", "witness")

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(self.CSV_HEADER)
        for t, s, v in zip(self.times, self.systoles, self.shortest_vectors):
            wr.writerow([repr(float(t)), repr(float(s)), ";".join(str(a) for a in v)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "x": list(self.x),
            "r": list(self.r),
            "norm": self.norm,
            "times": list(self.times),
            "systoles": list(self.systoles),
            "shortest_vectors": [list(v) for v in self.shortest_vectors],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrajectoryProfile":
        d = json.loads(text)
        return cls(
            times=tuple(d["times"]),
            systoles=tuple(d["systoles"]),
            shortest_vectors=tuple(tuple(v) for v in d["shortest_vectors"]),
            norm=d.get("norm", "euclidean"),
            x=tuple(d.get("x", ())),
            r=tuple(d.get("r", ())),
        )


def trajectory(x: Sequence, r, times: Sequence[float], norm: str = "euclidean") -> TrajectoryProfile:
    """Sample the orbit ``t -> g_t tau(x) Z^{n+1}`` at increasing ``times``."""
    w = as_weights(r)
    ts = [float(t) for t in times]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("times must be increasing")
    lengths, vecs = [], []
    for t in ts:
        s = systole(UnimodularLattice.from_flow(x, w, t), norm)
        lengths.append(s.length)
        vecs.append(s.witness)
    return TrajectoryProfile(
        times=tuple(ts),
        systoles=tuple(lengths),
        shortest_vectors=tuple(vecs),
        norm=norm,
        x=tuple(str(c) for c in exact_vector(x)),
        r=w.r,
    )
