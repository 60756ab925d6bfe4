"""Samplers for friendly measures and Monte Carlo probes of their regularity.

Every sampler turns a fixed number of uniform draws into one point, and
the uniforms come from a Philox counter-based generator keyed by the
sampler's seed. Sample ``i`` therefore depends only on ``(seed, i)``;
:func:`sample` can start anywhere in the stream and returns the same
points a full run would.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .dynamics import UnimodularLattice, flow_systole_scan, gamma_exponent, systole
from .lattice import RationalSubspace
from .weights import as_weights

__all__ = [
    "Box",
    "Ball",
    "AffineHyperplane",
    "LebesgueBox",
    "MissingDigit",
    "MomentCurve",
    "ProductOf",
    "parse_sampler",
    "sample",
    "DecayProbe",
    "decay_probe",
    "federer_probe",
    "EscapeEstimate",
    "binomial_ci",
    "escape_fraction",
    "escape_sweep",
    "DecayFit",
    "alpha_fit",
    "ell_V_batch",
    "GoodProbe",
    "good_hypothesis_probe",
    "empirical_t0",
    "NonplanarityEstimate",
    "nonplanarity_constant",
]


# ---------------------------------------------------------------------------
# Regions


@dataclass(frozen=True)
class Box:
    """Closed axis-parallel box ``prod [lows_i, highs_i]``."""

    lows: tuple[float, ...]
    highs: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lows)
        hi = tuple(float(v) for v in self.highs)
        if len(lo) != len(hi) or any(a > b for a, b in zip(lo, hi)):
            raise ValueError("box needs matching bounds with lows <= highs")
        object.__setattr__(self, "lows", lo)
        object.__setattr__(self, "highs", hi)

    @classmethod
    def unit(cls, dim: int) -> "Box":
        return cls((0.0,) * dim, (1.0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lows)

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.all((X >= np.array(self.lows)) & (X <= np.array(self.highs)), axis=1)


@dataclass(frozen=True)
class Ball:
    """Open Euclidean ball ``B(center, radius)``."""

    center: tuple[float, ...]
    radius: float

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.linalg.norm(X - np.asarray(self.center, dtype=float), axis=1) < self.radius


@dataclass(frozen=True)
class AffineHyperplane:
    """``{x : normal . x = offset}``."""

    normal: tuple[float, ...]
    offset: float = 0.0

    def __post_init__(self):
        if not np.any(np.asarray(self.normal, dtype=float)):
            raise ValueError("normal must be nonzero")

    @classmethod
    def coordinate(cls, dim: int, i: int, value: float) -> "AffineHyperplane":
        a = [0.0] * dim
        a[i] = 1.0
        return cls(tuple(a), float(value))

    def distance(self, X: np.ndarray) -> np.ndarray:
        a = np.asarray(self.normal, dtype=float)
        return np.abs(np.atleast_2d(X) @ a - self.offset) / np.linalg.norm(a)


# ---------------------------------------------------------------------------
# Samplers


class _Sampler:
    seed: int

    @property
    def dim(self) -> int:
        raise NotImplementedError

    @property
    def draws(self) -> int:
        """Uniform draws consumed per point."""
        raise NotImplementedError

    def transform(self, U: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class LebesgueBox(_Sampler):
    box: Box
    seed: int = 0

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def draws(self) -> int:
        return self.box.dim

    def transform(self, U):
        lo, hi = np.array(self.box.lows), np.array(self.box.highs)
        return lo + U * (hi - lo)

    def describe(self) -> str:
        return "lebesgue:" + "x".join(f"{a!r},{b!r}" for a, b in zip(self.box.lows, self.box.highs))


@dataclass(frozen=True)
class MissingDigit(_Sampler):
    """Self-similar measure on base-b expansions with digits restricted to S.

    Each coordinate draws ``depth`` digits uniformly from S and then a
    uniform offset inside the surviving interval of length ``b^{-depth}``.
    ``dim`` independent coordinates give the product measure.
    """

    base: int = 3
    digits: tuple[int, ...] = (0, 2)
    depth: int = 40
    dim_: int = 1
    seed: int = 0

    def __post_init__(self):
        ds = tuple(sorted(set(int(d) for d in self.digits)))
        if self.base < 2:
            raise ValueError("base must be >= 2")
        if not 2 <= len(ds) < self.base or ds[0] < 0 or ds[-1] >= self.base:
            raise ValueError("need 2 <= |S| < b with digits in [0, b)")
        if self.depth < 1 or self.dim_ < 1:
            raise ValueError("depth and dim must be positive")
        object.__setattr__(self, "digits", ds)

    @property
    def dim(self) -> int:
        return self.dim_

    @property
    def draws(self) -> int:
        return self.dim_ * (self.depth + 1)

    def transform(self, U):
        m, b = self.depth, self.base
        S = np.asarray(self.digits, dtype=float)
        out = np.empty((U.shape[0], self.dim_))
        for c in range(self.dim_):
            block = U[:, c * (m + 1) : (c + 1) * (m + 1)]
            idx = np.minimum((block[:, :m] * len(S)).astype(np.int64), len(S) - 1)
            val = block[:, m]
            # Horner from the deepest digit outwards keeps the rounding error at one ulp
            for j in range(m - 1, -1, -1):
                val = (S[idx[:, j]] + val) / b
            out[:, c] = val
        return out

    def describe(self) -> str:
        s = "".join(str(d) for d in self.digits) if self.base <= 10 else ".".join(map(str, self.digits))
        return f"cantor:b={self.base},S={s},m={self.depth},d={self.dim_}"


@dataclass(frozen=True)
class MomentCurve(_Sampler):
    """Pushforward of uniform measure on [a, b] under ``s -> (s, s^2, ..., s^n)``."""

    degree: int = 2
    a: float = 0.0
    b: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.degree < 2:
            raise ValueError("moment curve needs degree >= 2")
        if not self.a < self.b:
            raise ValueError("need a < b")

    @property
    def dim(self) -> int:
        return self.degree

    @property
    def draws(self) -> int:
        return 1

    def transform(self, U):
        s = self.a + U[:, 0] * (self.b - self.a)
        return np.stack([s**k for k in range(1, self.degree + 1)], axis=1)

    def describe(self) -> str:
        return f"moment:n={self.degree},a={self.a!r},b={self.b!r}"


@dataclass(frozen=True)
class ProductOf(_Sampler):
    """Product measure of independent factors; coordinates are concatenated."""

    factors: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if not self.factors:
            raise ValueError("product needs at least one factor")

    @property
    def dim(self) -> int:
        return sum(f.dim for f in self.factors)

    @property
    def draws(self) -> int:
        return sum(f.draws for f in self.factors)

    def transform(self, U):
        parts, k = [], 0
        for f in self.factors:
            parts.append(f.transform(U[:, k : k + f.draws]))
            k += f.draws
        return np.concatenate(parts, axis=1)

    def describe(self) -> str:
        return "*".join(f.describe() for f in self.factors)


def _with_seed(s, seed: int):
    from dataclasses import replace

    return replace(s, seed=seed)


def _parse_kv(body: str) -> dict:
    out = {}
    for part in body.split(","):
        if not part:
            continue
        k, _, v = part.partition("=")
        if not _:
            raise ValueError(f"expected key=value, got {part!r}")
        out[k.strip()] = v.strip()
    return out


def _num(v: str) -> float:
    return float(Fraction(v))


def parse_sampler(text: str, seed: int = 0):
    """Build a sampler from its compact string form.

    Grammar (factors joined by ``*`` form a product)::

        lebesgue:a1,b1xa2,b2x...
        cantor:b=3,S=02,m=40[,d=2]      (S as digit characters, or dot separated)
        moment:n=2,a=0,b=1
    """
    factors = [f.strip() for f in text.split("*") if f.strip()]
    if not factors:
        raise ValueError("empty sampler string")
    built = [_parse_one(f) for f in factors]
    if len(built) == 1:
        return _with_seed(built[0], seed)
    return ProductOf(tuple(built), seed=seed)


def _parse_one(text: str):
    kind, _, body = text.partition(":")
    kind = kind.strip().lower()
    if kind == "lebesgue":
        lows, highs = [], []
        for iv in body.split("x"):
            m = re.fullmatch(r"\s*([^,]+),([^,]+)\s*", iv)
            if not m:
                raise ValueError(f"bad interval {iv!r}")
            lows.append(_num(m.group(1)))
            highs.append(_num(m.group(2)))
        return LebesgueBox(Box(tuple(lows), tuple(highs)))
    if kind in ("cantor", "missingdigit"):
        kv = _parse_kv(body)
        b = int(kv.pop("b", "3"))
        s = kv.pop("S", "02")
        digits = tuple(int(c) for c in (s.split(".") if "." in s else s))
        m = int(kv.pop("m", "40"))
        d = int(kv.pop("d", "1"))
        if kv:
            raise ValueError(f"unknown cantor keys {sorted(kv)}")
        return MissingDigit(b, digits, m, d)
    if kind == "moment":
        kv = _parse_kv(body)
        n = int(kv.pop("n", "2"))
        a = _num(kv.pop("a", "0"))
        bb = _num(kv.pop("b", "1"))
        if kv:
            raise ValueError(f"unknown moment keys {sorted(kv)}")
        return MomentCurve(n, a, bb)
    raise ValueError(f"unknown sampler kind {kind!r}")


def sample(s, N: int, start: int = 0) -> np.ndarray:
    """Points ``start, ..., start + N - 1`` of the sampler's stream, shape (N, dim)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    per = -(-s.draws // 4) * 4
    bitgen = np.random.Philox(key=int(s.seed) & ((1 << 64) - 1))
    if start:
        bitgen = bitgen.advance(start * per // 4)
    U = np.random.Generator(bitgen).random((N, per))[:, : s.draws]
    return s.transform(U)


# ---------------------------------------------------------------------------
# Regularity probes


@dataclass(frozen=True)
class DecayProbe:
    fraction: float
    stderr: float
    sup_distance: float
    count: int


def decay_probe(s, B, L: AffineHyperplane, eps: float, N: int) -> DecayProbe:
    """Sample estimate of ``mu(B cap L^(eps)) / mu(B)`` and of ``sup_B d_L``."""
    X = sample(s, N)
    X = X[B.contains(X)]
    if len(X) == 0:
        raise ValueError("no samples fell in B")
    d = L.distance(X)
    f = float(np.mean(d < eps))
    return DecayProbe(f, math.sqrt(f * (1 - f) / len(X)), float(d.max()), len(X))


def federer_probe(s, x: Sequence[float], rad: float, N: int) -> float:
    """``count(B(x, 3 rad)) / count(B(x, rad))`` over N samples."""
    X = sample(s, N)
    d = np.linalg.norm(X - np.asarray(x, dtype=float), axis=1)
    inner = int(np.count_nonzero(d < rad))
    if inner == 0:
        raise ValueError("inner ball contains no samples")
    return int(np.count_nonzero(d < 3 * rad)) / inner


# ---------------------------------------------------------------------------
# Escape estimates


_Z95 = 1.959963984540054


def binomial_ci(k: int, N: int) -> tuple[float, float]:
    """95% interval for a binomial proportion: normal, or Wilson when k < 5."""
    f = k / N
    if k < 5:
        z2 = _Z95 * _Z95
        centre = (f + z2 / (2 * N)) / (1 + z2 / N)
        half = _Z95 * math.sqrt(f * (1 - f) / N + z2 / (4 * N * N)) / (1 + z2 / N)
        lo, hi = centre - half, centre + half
    else:
        half = _Z95 * math.sqrt(f * (1 - f) / N)
        lo, hi = f - half, f + half
    return max(0.0, min(lo, f)), min(1.0, max(hi, f))


@dataclass(frozen=True)
class EscapeEstimate:
    """Fraction of sampled x whose lattice ``g_t tau(x) Z^{n+1}`` leaves K_eps."""

    t: float
    eps: float
    N: int
    escaped: int
    fraction: float
    ci_low: float
    ci_high: float

    CSV_HEADER = ("t", "eps", "N", "escaped", "fraction", "ci_low", "ci_high")

    def row(self) -> list[str]:
        return [repr(float(self.t)), repr(float(self.eps)), str(self.N), str(self.escaped),
                repr(self.fraction), repr(self.ci_low), repr(self.ci_high)]

    @property
    def ci_width(self) -> float:
        return self.ci_high - self.ci_low


def _systole_chunk(args):
    X, r, t, norm = args
    return [systole(UnimodularLattice.from_flow(x, r, t), norm).length for x in X]


def _systoles(X, r, t, cap, method, norm, threads=1):
    if method == "scan":
        lengths, _ = flow_systole_scan(X, r, t, cap, norm)
        return lengths
    if method != "systole":
        raise ValueError(f"unknown method {method!r}")
    if threads <= 1 or len(X) < 2 * threads:
        return np.array(_systole_chunk((X, r, t, norm)))
    from concurrent.futures import ProcessPoolExecutor

    # results come back in chunk order, so output does not depend on threads
    chunks = [(c, r, t, norm) for c in np.array_split(X, threads)]
    with ProcessPoolExecutor(threads) as ex:
        return np.concatenate([np.asarray(c) for c in ex.map(_systole_chunk, chunks)])


def escape_sweep(s, B, r, t: float, eps_list: Sequence[float], N: int, method: str = "scan", norm: str = "euclidean",
                 threads: int = 1) -> list[EscapeEstimate]:
    """Escape estimates for several eps from one shared sample of N points."""
    w = as_weights(r)
    if t < 0:
        raise ValueError("t must be >= 0")
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list):
        raise ValueError("eps must be positive")
    X = sample(s, N)
    if B is not None:
        X = X[B.contains(X)]
    if len(X) == 0:
        raise ValueError("no samples fell in B")
    lengths = _systoles(X, w, t, max(eps_list), method, norm, threads)
    out = []
    for e in eps_list:
        k = int(np.count_nonzero(lengths < e))
        lo, hi = binomial_ci(k, len(X))
        out.append(EscapeEstimate(float(t), e, len(X), k, k / len(X), lo, hi))
    return out


def escape_fraction(s, B, r, t: float, eps: float, N: int, method: str = "scan", norm: str = "euclidean") -> EscapeEstimate:
    """Monte Carlo estimate of ``mu({x in B : g_t tau(x) Z^{n+1} not in K_eps}) / mu(B)``.

    ``method="scan"`` uses the exact structured search over q (valid for
    t >= 0); ``method="systole"`` reduces and enumerates every lattice.
    """
    return escape_sweep(s, B, r, t, [eps], N, method, norm)[0]


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit ``log f = log C + alpha log eps``."""

    eps: tuple[float, ...]
    values: tuple[float, ...]
    alpha: float
    C: float
    residual: float


def alpha_fit(estimates) -> DecayFit:
    """Fit the decay exponent from EscapeEstimates or ``(eps, value)`` pairs."""
    pairs = []
    for e in estimates:
        if isinstance(e, EscapeEstimate):
            pairs.append((e.eps, e.fraction))
        else:
            pairs.append((float(e[0]), float(e[1])))
    pairs = sorted(p for p in pairs if p[1] > 0)
    if len({p[0] for p in pairs}) < 3:
        raise ValueError("need at least 3 distinct eps with nonzero values; widen the eps range")
    le = np.log([p[0] for p in pairs])
    lf = np.log([p[1] for p in pairs])
    slope, intercept = np.polyfit(le, lf, 1)
    resid = lf - (slope * le + intercept)
    return DecayFit(
        eps=tuple(p[0] for p in pairs),
        values=tuple(p[1] for p in pairs),
        alpha=float(slope),
        C=float(math.exp(intercept)),
        residual=float(math.sqrt(np.mean(resid**2))),
    )


# ---------------------------------------------------------------------------
# Good-function hypotheses


def ell_V_batch(X: np.ndarray, r, t: float, V: RationalSubspace) -> np.ndarray:
    """``ell_V(g_t tau(x))`` for each row x of X."""
    w = as_weights(r)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = w.n
    scales = np.exp(w.exponents() * t)
    basis = np.asarray(V.basis, dtype=float)  # k x (n+1)
    # tau(x) v = (v_1 + x_1 v_{n+1}, ..., v_n + x_n v_{n+1}, v_{n+1})
    imgs = np.empty((X.shape[0], basis.shape[0], n + 1))
    imgs[:, :, :n] = basis[None, :, :n] + X[:, None, :] * basis[None, :, n : n + 1]
    imgs[:, :, n] = basis[None, :, n]
    imgs *= scales
    k = basis.shape[0]
    total = np.zeros(X.shape[0])
    for cols in itertools.combinations(range(n + 1), k):
        minor = np.linalg.det(imgs[:, :, cols])
        total += minor * minor
    return np.sqrt(total)


@dataclass(frozen=True)
class GoodProbe:
    sup: float
    profile: tuple[tuple[float, float], ...]


def good_hypothesis_probe(s, V: RationalSubspace, r, t: float, B, N: int, levels: int = 12) -> GoodProbe:
    """Sample sup of ``ell_V o h_t`` on B and its sublevel fractions.

    The profile lists ``(eps', mu{ell_V o h_t < eps'} / mu(B))`` for
    ``eps' = sup * 2^{-j}``, ``j = levels, ..., 0``.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    X = sample(s, N)
    if B is not None:
        X = X[B.contains(X)]
    if len(X) == 0:
        raise ValueError("no samples fell in B")
    vals = ell_V_batch(X, r, t, V)
    sup = float(vals.max())
    prof = []
    for j in range(levels, -1, -1):
        e = sup * 2.0**-j
        prof.append((e, float(np.mean(vals < e))))
    return GoodProbe(sup, tuple(prof))


def empirical_t0(s, B, r, subspaces: Sequence[RationalSubspace], N: int, times: Sequence[float]) -> float | None:
    """Smallest sampled t from which ``sup_B ell_V o h_t >= 1`` for every V at every later sampled t."""
    X = sample(s, N)
    if B is not None:
        X = X[B.contains(X)]
    ok = []
    for t in times:
        ok.append(all(ell_V_batch(X, r, t, V).max() >= 1.0 for V in subspaces))
    t0 = None
    for t, good in zip(reversed(list(times)), reversed(ok)):
        if not good:
            break
        t0 = t
    return t0


@dataclass(frozen=True)
class NonplanarityEstimate:
    """Sample minimum over a hyperplane family of ``sup_B d_L``, and the induced t0."""

    c: float
    t0: float
    normal: tuple[int, ...]
    offset: int
    height: int


def nonplanarity_constant(s, B, r, N: int, height: int = 3) -> NonplanarityEstimate:
    """Estimate ``c(B) = min_L sup_{x in B cap supp mu} d_L(x)`` over integer hyperplanes.

    The family is ``{a . x = c}`` with integer ``a`` (first nonzero entry positive)
    and integer ``c``, ``gcd(a, c) = 1``, all entries bounded by ``height``.
    The reported ``t0 = log(1/c) / min(r)`` is an estimate, not a bound.
    """
    w = as_weights(r)
    X = sample(s, N)
    if B is not None:
        X = X[B.contains(X)]
    if len(X) == 0:
        raise ValueError("no samples fell in B")
    best = (math.inf, (), 0)
    rng = range(-height, height + 1)
    for a in itertools.product(rng, repeat=X.shape[1]):
        nz = [v for v in a if v]
        if not nz or nz[0] < 0:
            continue
        proj = X @ np.asarray(a, dtype=float)
        norm = math.sqrt(sum(v * v for v in a))
        for c in rng:
            if math.gcd(*a, c) != 1:
                continue
            d = float(np.max(np.abs(proj - c))) / norm
            if d < best[0]:
                best = (d, a, c)
    c, a, off = best
    t0 = max(0.0, math.log(1.0 / c) / gamma_exponent(w, 1)) if c > 0 else math.inf
    return NonplanarityEstimate(c, t0, tuple(a), off, height)
