"""Exact integer linear algebra on Z^{n+1}.

Wedge products (Plücker coordinates), saturation of rational subspaces via
integer Hermite normal form, and the integer elimination that splits a wedge
``w`` into ``w0 ^ (q e0 - p)`` with ``w0`` supported in the horizontal
subspace ``V0 = {x_{n+1} = 0}``.

All lattice data is kept as Python ``int`` (arbitrary precision). Floating
point only appears in :func:`decompose_norm_sq`, which evaluates norms of the
flowed wedges.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .exceptions import RankError
from .weights import as_weights

__all__ = [
    "MultiVector",
    "RationalSubspace",
    "WedgeDecomposition",
    "wedge",
    "wedge_float",
    "hnf",
    "integer_kernel",
    "saturate",
    "eliminate",
    "decompose_norm_sq",
    "vectors_to_json",
    "vectors_from_json",
]


def _int_vector(v: Iterable) -> tuple[int, ...]:
    out = []
    for c in v:
        if isinstance(c, (int, np.integer)):
            out.append(int(c))
        elif isinstance(c, Fraction) and c.denominator == 1:
            out.append(c.numerator)
        elif float(c).is_integer():
            out.append(int(c))
        else:
            raise TypeError(f"non-integer coordinate {c!r}")
    return tuple(out)


def _merge_sign(s: tuple[int, ...], t: tuple[int, ...]) -> int:
    # sign of the permutation sorting the concatenation s + t
    inversions = sum(1 for a in s for b in t if a > b)
    return -1 if inversions % 2 else 1


@dataclass(frozen=True)
class MultiVector:
    """An element of the k-th exterior power of R^dim.

    ``coords`` are indexed by the k-subsets of ``range(dim)`` in
    lexicographic order (``itertools.combinations`` order). Grade 0 holds a
    single scalar.
    """

    dim: int
    grade: int
    coords: tuple

    def __post_init__(self):
        if not 0 <= self.grade <= self.dim:
            raise ValueError(f"grade {self.grade} out of range for dim {self.dim}")
        if len(self.coords) != math.comb(self.dim, self.grade):
            raise ValueError("coordinate count does not match C(dim, grade)")

    @classmethod
    def scalar(cls, dim: int, value=1) -> "MultiVector":
        return cls(dim, 0, (value,))

    @classmethod
    def from_vector(cls, v: Sequence) -> "MultiVector":
        return cls(len(v), 1, tuple(v))

    @classmethod
    def basis_blade(cls, dim: int, indices: Sequence[int]) -> "MultiVector":
        """The blade e_{i1} ^ ... ^ e_{ik} (0-based, increasing indices)."""
        key = tuple(indices)
        subsets = list(combinations(range(dim), len(key)))
        return cls(dim, len(key), tuple(1 if s == key else 0 for s in subsets))

    @cached_property
    def subsets(self) -> list[tuple[int, ...]]:
        return list(combinations(range(self.dim), self.grade))

    def items(self):
        return zip(self.subsets, self.coords)

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coords)

    def __add__(self, other: "MultiVector") -> "MultiVector":
        if (self.dim, self.grade) != (other.dim, other.grade):
            raise ValueError("cannot add multivectors of different shape")
        return MultiVector(self.dim, self.grade, tuple(a + b for a, b in zip(self.coords, other.coords)))

    def __neg__(self) -> "MultiVector":
        return MultiVector(self.dim, self.grade, tuple(-c for c in self.coords))

    def scale(self, c) -> "MultiVector":
        return MultiVector(self.dim, self.grade, tuple(c * a for a in self.coords))

    def wedge(self, other: "MultiVector") -> "MultiVector":
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        grade = self.grade + other.grade
        if grade > self.dim:
            raise ValueError("grade exceeds dimension")
        acc: dict[tuple[int, ...], object] = {}
        for s, a in self.items():
            if a == 0:
                continue
            for t, b in other.items():
                if b == 0 or set(s) & set(t):
                    continue
                key = tuple(sorted(s + t))
                acc[key] = acc.get(key, 0) + _merge_sign(s, t) * a * b
        subsets = combinations(range(self.dim), grade)
        return MultiVector(self.dim, grade, tuple(acc.get(k, 0) for k in subsets))

    def __xor__(self, other: "MultiVector") -> "MultiVector":
        return self.wedge(other)

    def apply_diagonal(self, diag: Sequence[float]) -> np.ndarray:
        """Coordinates of (prod of diag over each index subset) * coord, as floats."""
        d = [float(x) for x in diag]
        return np.array([float(c) * math.prod(d[i] for i in s) for s, c in self.items()])

    def norm(self) -> float:
        # the lexicographic blades are orthonormal for the induced Euclidean structure
        return math.sqrt(float(sum(Fraction(c) ** 2 for c in self.coords)))

    def content(self) -> int:
        """gcd of the (integer) coordinates."""
        g = 0
        for c in self.coords:
            g = math.gcd(g, int(c))
        return g

    def to_json(self) -> str:
        return json.dumps({"dim": self.dim, "grade": self.grade, "coords": [str(c) for c in self.coords]})


def wedge(vs: Sequence[Sequence[int]]) -> MultiVector:
    """Exterior product of integer vectors.

    Returns the Plücker coordinates, i.e. the k x k minors of the k x (n+1)
    matrix with rows ``vs``, in lexicographic column-subset order.

    >>> wedge([(1, 2, 3), (4, 5, 6)]).coords
    (-3, -6, -3)
    """
    if not vs:
        raise ValueError("need at least one vector")
    rows = [_int_vector(v) for v in vs]
    dim = len(rows[0])
    if any(len(r) != dim for r in rows):
        raise ValueError("dimension mismatch among input vectors")
    if dim < 2:
        raise ValueError("vectors must have length >= 2")
    if len(rows) > dim:
        raise ValueError("more vectors than the ambient dimension")
    out = MultiVector.from_vector(rows[0])
    for r in rows[1:]:
        out = out.wedge(MultiVector.from_vector(r))
    return out


def wedge_float(vectors: np.ndarray) -> np.ndarray:
    """Plücker coordinates of the rows of a real k x d matrix (floating point)."""
    m = np.atleast_2d(np.asarray(vectors, dtype=float))
    k, d = m.shape
    if k == 0:
        return np.ones(1)
    cols = list(combinations(range(d), k))
    return np.array([np.linalg.det(m[:, list(c)]) for c in cols])


# ---------------------------------------------------------------------------
# Hermite normal form and integer kernels


def _xgcd(a: int, b: int) -> tuple[int, int, int]:
    """Return (g, x, y) with a*x + b*y = g = gcd(a, b) >= 0."""
    x0, y0, x1, y1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    if a < 0:
        a, x0, y0 = -a, -x0, -y0
    return a, x0, y0


def hnf(matrix: Sequence[Sequence[int]]) -> tuple[list[list[int]], list[list[int]], list[int]]:
    """Column-style Hermite normal form.

    Returns ``(H, U, pivots)`` with ``A @ U == H``, ``U`` unimodular, ``H``
    in column echelon form with positive pivots and entries left of each
    pivot reduced into ``[0, pivot)``. ``pivots[j]`` is the row of the pivot
    of column ``j`` for the leading ``len(pivots)`` columns; the remaining
    columns of ``H`` are zero. Pivot rows are scanned top to bottom, so ties
    are broken by the smallest row index.
    """
    a = [list(_int_vector(row)) for row in matrix]
    m = len(a)
    n = len(a[0]) if m else 0
    u = [[int(i == j) for j in range(n)] for i in range(n)]

    def colop(j: int, k: int, x: int, y: int, z: int, w: int) -> None:
        # (col_j, col_k) <- (x col_j + y col_k, z col_j + w col_k), det = xw - yz = 1
        for mat in (a, u):
            for row in mat:
                cj, ck = row[j], row[k]
                row[j], row[k] = x * cj + y * ck, z * cj + w * ck

    def swap(j: int, k: int) -> None:
        for mat in (a, u):
            for row in mat:
                row[j], row[k] = row[k], row[j]

    pivots: list[int] = []
    col = 0
    for i in range(m):
        if col >= n:
            break
        for k in range(col + 1, n):
            if a[i][k] == 0:
                continue
            if a[i][col] == 0:
                swap(col, k)
                continue
            g, x, y = _xgcd(a[i][col], a[i][k])
            p, q = a[i][col] // g, a[i][k] // g
            colop(col, k, x, y, -q, p)
        if a[i][col] == 0:
            continue
        if a[i][col] < 0:
            for mat in (a, u):
                for row in mat:
                    row[col] = -row[col]
        piv = a[i][col]
        for j in range(col):
            f = a[i][j] // piv
            if f:
                for mat in (a, u):
                    for row in mat:
                        row[j] -= f * row[col]
        pivots.append(i)
        col += 1
    return a, u, pivots


def integer_kernel(matrix: Sequence[Sequence[int]], ncols: int | None = None) -> list[tuple[int, ...]]:
    """A basis of {y in Z^N : A y = 0}; the returned lattice is saturated."""
    rows = [list(_int_vector(r)) for r in matrix]
    if not rows:
        if ncols is None:
            raise ValueError("ncols required for an empty matrix")
        return [tuple(int(i == j) for i in range(ncols)) for j in range(ncols)]
    n = len(rows[0])
    _, u, pivots = hnf(rows)
    r = len(pivots)
    return [tuple(u[i][j] for i in range(n)) for j in range(r, n)]


def _rank(rows: Sequence[Sequence[int]]) -> int:
    if not rows:
        return 0
    return len(hnf(rows)[2])


def _row_hnf(rows: Sequence[Sequence[int]]) -> list[tuple[int, ...]]:
    # column HNF of the transpose gives a canonical row basis
    t = [list(c) for c in zip(*rows)]
    h, _, piv = hnf(t)
    return [tuple(h[i][j] for i in range(len(h))) for j in range(len(piv))]


@dataclass(frozen=True)
class RationalSubspace:
    """A rational subspace V of R^{n+1} given by a basis of Z^{n+1} ∩ V."""

    basis: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        rows = tuple(_int_vector(v) for v in self.basis)
        object.__setattr__(self, "basis", rows)
        if not rows:
            raise ValueError("empty basis")
        if len({len(r) for r in rows}) != 1:
            raise ValueError("dimension mismatch among basis vectors")
        if _rank(rows) != len(rows):
            raise RankError("basis vectors are linearly dependent")

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def ambient_dim(self) -> int:
        return len(self.basis[0])

    def wedge(self) -> MultiVector:
        return wedge(self.basis)

    def is_saturated(self) -> bool:
        return self.wedge().content() == 1

    def in_horizontal(self) -> bool:
        """True when V is contained in V0 = {x_{n+1} = 0}."""
        return all(v[-1] == 0 for v in self.basis)

    def to_json(self) -> str:
        return vectors_to_json(self.basis)

    @classmethod
    def from_json(cls, text: str) -> "RationalSubspace":
        return cls(tuple(vectors_from_json(text)))


def saturate(vs: Sequence[Sequence[int]]) -> RationalSubspace:
    """Basis of the saturated lattice Z^{n+1} ∩ span(vs), in row-HNF form."""
    rows = [_int_vector(v) for v in vs]
    if not rows:
        raise ValueError("need at least one vector")
    dim = len(rows[0])
    if any(len(r) != dim for r in rows):
        raise ValueError("dimension mismatch among input vectors")
    if _rank(rows) != len(rows):
        raise RankError("input vectors are linearly dependent")
    ortho = integer_kernel(rows)
    sat = integer_kernel(ortho, ncols=dim)
    return RationalSubspace(tuple(_row_hnf(sat)))


# ---------------------------------------------------------------------------
# Elimination  w = sign * w0 ^ (q e0 - p)


@dataclass(frozen=True)
class WedgeDecomposition:
    """Result of :func:`eliminate`.

    ``w0`` has grade k-1 and is supported on blades avoiding the last
    index; ``p`` lives in V0(Z) identified with Z^n; ``q`` is a nonnegative
    integer. ``sign`` is +1 or -1 and ``sign * w0 ^ (q e0 - p)`` is the wedge
    of the input basis.
    """

    w0: MultiVector
    p: tuple[int, ...]
    q: int
    sign: int

    @property
    def last_vector(self) -> tuple[int, ...]:
        """q e0 - p as a vector of Z^{n+1}."""
        return tuple(-c for c in self.p) + (self.q,)

    def reassemble(self) -> MultiVector:
        return self.w0.wedge(MultiVector.from_vector(self.last_vector)).scale(self.sign)


def eliminate(V: RationalSubspace) -> WedgeDecomposition:
    """Integer elimination of the last coordinate of a basis of V.

    Unimodular row operations leave at most one basis vector with a nonzero
    last coordinate; that vector becomes ``q e0 - p`` and the remaining ones
    wedge to ``w0``.
    """
    rows = [list(v) for v in V.basis]
    k = len(rows)
    dim = len(rows[0])
    sign = 1
    while True:
        nz = [i for i in range(k) if rows[i][-1] != 0]
        if len(nz) <= 1:
            break
        piv = min(nz, key=lambda i: (abs(rows[i][-1]), i))
        for i in nz:
            if i == piv:
                continue
            f = rows[i][-1] // rows[piv][-1]
            rows[i] = [a - f * b for a, b in zip(rows[i], rows[piv])]
    nz = [i for i in range(k) if rows[i][-1] != 0]
    piv = nz[0] if nz else k - 1
    if piv != k - 1:
        rows[piv], rows[k - 1] = rows[k - 1], rows[piv]
        sign = -sign
    if rows[-1][-1] < 0:
        rows[-1] = [-a for a in rows[-1]]
        sign = -sign
    if k == 1:
        w0 = MultiVector.scalar(dim, 1)
    else:
        w0 = wedge(rows[:-1])
    last = rows[-1]
    q = last[-1]
    p = tuple(-a for a in last[:-1])
    return WedgeDecomposition(w0=w0, p=p, q=q, sign=sign)


def decompose_norm_sq(V: RationalSubspace, x: Sequence[float], r, t: float) -> tuple[float, float]:
    """Split ||g_t tau(x) w||^2 into its two orthogonal pieces.

    Returns ``(a, b)`` with ``a = q^2 ||g_t (w0 ^ e0)||^2`` and
    ``b = ||g_t (w0 ^ (q x - p))||^2``.
    """
    w = as_weights(r)
    x = np.asarray(x, dtype=float)
    dec = eliminate(V)
    n = V.ambient_dim - 1
    if x.shape != (n,) or w.n != n:
        raise ValueError("dimensions of V, x and r are inconsistent")
    diag = np.exp(np.append(np.asarray(w.r) * t, -t))
    e0 = MultiVector.basis_blade(n + 1, (n,))
    a = dec.q**2 * float(np.sum(dec.w0.wedge(e0).apply_diagonal(diag) ** 2))
    y = dec.q * x - np.asarray(dec.p, dtype=float)
    yvec = MultiVector.from_vector(tuple(y.tolist()) + (0.0,))
    w0f = MultiVector(dec.w0.dim, dec.w0.grade, tuple(float(c) for c in dec.w0.coords))
    b = float(np.sum(w0f.wedge(yvec).apply_diagonal(diag) ** 2))
    return a, b


def vectors_to_json(vs: Iterable[Sequence[int]]) -> str:
    """Serialize integer vectors as JSON arrays of decimal strings (exact)."""
    return json.dumps([[str(int(c)) for c in v] for v in vs])


def vectors_from_json(text: str) -> list[tuple[int, ...]]:
    return [tuple(int(c) for c in v) for v in json.loads(text)]
