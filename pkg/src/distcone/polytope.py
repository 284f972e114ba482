"""Admissible vectors of a distance matrix and the polyhedron they form.

For a distance matrix ``r`` of order ``n`` the admissible set

    A(r) = {a in R^n : |a_i - a_j| <= r_ij <= a_i + a_j, a_i >= 0}

is the set of distance columns that extend ``r`` by one point. It is a pointed
polyhedron whose recession cone is the diagonal ray, so it splits as
``conv(vertices) + {lambda * (1, ..., 1)}``.

Vertex enumeration in the rational domain uses the double description method
on integer-scaled constraints; an exhaustive search over ``n``-subsets of
constraints is kept as an independent (slow) oracle. Float matrices are
converted to rationals exactly before enumeration; a batched float version of
the subset search is kept for cross-checking.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from typing import Sequence

import numpy as np

from .cone import (
    DEFAULT_TOL,
    FLOAT,
    RATIONAL,
    DistanceMatrix,
    nw_corner,
    to_fraction,
)

logger = logging.getLogger(__name__)

DEFAULT_VERTEX_CAP = 7
FLOAT_VERTEX_CAP = 5
CLAMP_TOL = 1e-9


class InadmissibleVector(ValueError):
    pass


class VertexCapExceeded(ValueError):
    pass


@dataclass(frozen=True)
class Halfspace:
    """``coeffs . a  <sense>  rhs`` with sense ``"<="`` or ``">="``."""

    coeffs: tuple
    rhs: object
    sense: str

    def holds(self, a, tol=0) -> bool:
        lhs = sum(c * x for c, x in zip(self.coeffs, a) if c)
        if self.sense == "<=":
            return lhs <= self.rhs + tol
        return lhs >= self.rhs - tol

    def as_dict(self) -> dict:
        from .formats import num_to_json

        return {"coeffs": list(self.coeffs), "rhs": num_to_json(self.rhs), "sense": self.sense}


@dataclass(frozen=True)
class AdmissibleVector:
    base_order: int
    coords: tuple

    def __len__(self):
        return len(self.coords)

    def __iter__(self):
        return iter(self.coords)

    def __getitem__(self, i):
        return self.coords[i]

    def as_array(self) -> np.ndarray:
        if all(isinstance(x, Fraction) for x in self.coords):
            return np.array(self.coords, dtype=object)
        return np.array(self.coords, dtype=float)

    @classmethod
    def of(cls, r: DistanceMatrix, coords, tol: float = DEFAULT_TOL) -> "AdmissibleVector":
        vec = _as_vector(r, coords)
        if not _admissible(r, vec, tol):
            raise InadmissibleVector(f"vector {list(coords)} is not admissible for the order-{r.order} base")
        return cls(r.order, tuple(vec.tolist()))


@dataclass(frozen=True)
class ExtensionInterval:
    lower: object
    upper: object

    @property
    def empty(self) -> bool:
        return self.lower > self.upper

    def __contains__(self, h) -> bool:
        return self.lower <= h <= self.upper


@dataclass
class AdmissiblePolytope:
    base: DistanceMatrix
    constraints: list
    _vertices: list | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.base.order

    @property
    def ray(self) -> tuple:
        one = Fraction(1) if self.base.exact else 1.0
        return (one,) * self.dim


def _as_vector(r: DistanceMatrix, a) -> np.ndarray:
    if isinstance(a, AdmissibleVector):
        a = a.coords
    a = list(a)
    if len(a) != r.order:
        raise ValueError(f"vector has length {len(a)}, base order is {r.order}")
    if r.exact:
        return np.array([to_fraction(x) for x in a], dtype=object)
    return np.array(a, dtype=float)


def _admissible(r: DistanceMatrix, a: np.ndarray, tol: float) -> bool:
    arr = r.to_array()
    n = r.order
    if r.exact:
        if any(x < 0 for x in a):
            return False
        for j in range(1, n):
            for i in range(j):
                rij = arr[i, j]
                if abs(a[i] - a[j]) > rij or rij > a[i] + a[j]:
                    return False
        return True
    if np.any(a < -tol):
        return False
    if n == 1:
        return True
    diff = np.abs(a[:, None] - a[None, :])
    tot = a[:, None] + a[None, :]
    off = ~np.eye(n, dtype=bool)
    return bool(np.all(diff[off] <= arr[off] + tol) and np.all(arr[off] <= tot[off] + tol))


def build(r: DistanceMatrix) -> AdmissiblePolytope:
    """Halfspace description of ``A(r)``: 3 per pair ``i<j`` plus ``n`` sign constraints."""
    n = r.order
    arr = r.to_array()
    cons = []
    for j in range(1, n):
        for i in range(j):
            rij = arr[i, j]
            e = [0] * n
            e[i], e[j] = 1, -1
            cons.append(Halfspace(tuple(e), rij, "<="))
            e = [0] * n
            e[i], e[j] = -1, 1
            cons.append(Halfspace(tuple(e), rij, "<="))
            e = [0] * n
            e[i] = e[j] = 1
            cons.append(Halfspace(tuple(e), rij, ">="))
    zero = Fraction(0) if r.exact else 0.0
    for i in range(n):
        e = [0] * n
        e[i] = 1
        cons.append(Halfspace(tuple(e), zero, ">="))
    return AdmissiblePolytope(r, cons)


def contains(P: AdmissiblePolytope, a, tol: float = DEFAULT_TOL) -> bool:
    """Direct evaluation of the pairwise inequalities (tolerance ignored when exact)."""
    return _admissible(P.base, _as_vector(P.base, a), tol)


def _le_rows(P: AdmissiblePolytope):
    """Constraints as ``(g, h)`` with ``g . a <= h``."""
    rows = []
    for c in P.constraints:
        if c.sense == "<=":
            rows.append((c.coeffs, c.rhs))
        else:
            rows.append((tuple(-x for x in c.coeffs), -c.rhs))
    return rows


# -- exact linear algebra ---------------------------------------------------

def _rank(rows) -> int:
    m = [[Fraction(x) for x in row] for row in rows]
    rank, ncol = 0, len(m[0]) if m else 0
    for col in range(ncol):
        piv = next((i for i in range(rank, len(m)) if m[i][col] != 0), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        p = m[rank][col]
        for i in range(len(m)):
            if i != rank and m[i][col] != 0:
                f = m[i][col] / p
                m[i] = [x - f * y for x, y in zip(m[i], m[rank])]
        rank += 1
    return rank


def _solve(A, b):
    """Exact solve of a square system; ``None`` if singular."""
    n = len(A)
    m = [[Fraction(x) for x in row] + [Fraction(y)] for row, y in zip(A, b)]
    for col in range(n):
        piv = next((i for i in range(col, n) if m[i][col] != 0), None)
        if piv is None:
            return None
        m[col], m[piv] = m[piv], m[col]
        p = m[col][col]
        m[col] = [x / p for x in m[col]]
        for i in range(n):
            if i != col and m[i][col] != 0:
                f = m[i][col]
                m[i] = [x - f * y for x, y in zip(m[i], m[col])]
    return [m[i][n] for i in range(n)]


def _inverse(A):
    n = len(A)
    cols = []
    for k in range(n):
        e = [0] * n
        e[k] = 1
        x = _solve(A, e)
        if x is None:
            return None
        cols.append(x)
    return cols  # cols[k] is column k of A^{-1}


def _int_normalize(v) -> tuple:
    g = 0
    for x in v:
        g = math.gcd(g, x)
    if g > 1:
        v = [x // g for x in v]
    return tuple(v)


def _frac_to_int_vector(v) -> tuple:
    den = 1
    for x in v:
        den = den * x.denominator // math.gcd(den, x.denominator)
    return _int_normalize([int(x * den) for x in v])


# -- double description -----------------------------------------------------

def _dd_extreme_rays(A: list[tuple]) -> list[tuple]:
    """Extreme rays of the pointed cone ``{x : A x <= 0}`` (integer rows)."""
    d = len(A[0])
    basis, chosen = [], []
    for k, row in enumerate(A):
        if _rank(chosen + [row]) > len(chosen):
            chosen.append(row)
            basis.append(k)
            if len(basis) == d:
                break
    if len(basis) < d:
        raise ValueError("cone is not pointed")
    inv = _inverse([A[k] for k in basis])
    rays, zmask = [], []
    all_basis = 0
    for k in basis:
        all_basis |= 1 << k
    for pos, k in enumerate(basis):
        rays.append(_frac_to_int_vector([-x for x in inv[pos]]))
        zmask.append(all_basis & ~(1 << k))
    done = set(basis)
    for k, row in enumerate(A):
        if k in done:
            continue
        vals = [sum(a * x for a, x in zip(row, ray) if a) for ray in rays]
        pos = [i for i, v in enumerate(vals) if v > 0]
        neg = [i for i, v in enumerate(vals) if v < 0]
        new_rays, new_z = [], []
        for i, v in enumerate(vals):
            if v <= 0:
                new_rays.append(rays[i])
                new_z.append(zmask[i] | (1 << k) if v == 0 else zmask[i])
        bit = 1 << k
        for p in pos:
            for q in neg:
                common = zmask[p] & zmask[q]
                if common.bit_count() < d - 2:
                    continue
                adjacent = True
                for s in range(len(rays)):
                    if s != p and s != q and (zmask[s] & common) == common:
                        adjacent = False
                        break
                if not adjacent:
                    continue
                vp, vq = vals[p], vals[q]
                w = [vp * xq - vq * xp for xp, xq in zip(rays[p], rays[q])]
                new_rays.append(_int_normalize(w))
                new_z.append(common | bit)
        rays, zmask = new_rays, new_z
        done.add(k)
    seen, out = set(), []
    for ray in rays:
        if ray not in seen:
            seen.add(ray)
            out.append(ray)
    return out


def _vertices_dd(P: AdmissiblePolytope) -> list[tuple]:
    n = P.dim
    A = []
    for g, h in _le_rows(P):
        h = to_fraction(h)
        den = h.denominator
        A.append(tuple(int(x) * den for x in g) + (-h.numerator,))
    A.append((0,) * n + (-1,))
    verts = []
    for ray in _dd_extreme_rays(A):
        t = ray[-1]
        if t > 0:
            verts.append(tuple(Fraction(x, t) for x in ray[:-1]))
        else:
            lead = ray[0]
            if lead <= 0 or any(x != lead for x in ray[:-1]):
                raise AssertionError(f"unexpected recession direction {ray[:-1]}")
    return sorted(verts)


def _vertices_subsets(P: AdmissiblePolytope) -> list[tuple]:
    """Solve every ``n``-subset of constraints exactly and keep feasible points."""
    n = P.dim
    rows = _le_rows(P)
    found = set()
    for S in combinations(range(len(rows)), n):
        x = _solve([rows[k][0] for k in S], [rows[k][1] for k in S])
        if x is None:
            continue
        if all(sum(g_i * x_i for g_i, x_i in zip(g, x) if g_i) <= h for g, h in rows):
            found.add(tuple(x))
    return sorted(found)


@lru_cache(maxsize=16)
def _subset_index(num_rows: int, n: int) -> np.ndarray:
    return np.array(list(combinations(range(num_rows), n)), dtype=np.intp).reshape(-1, n)


def float_constraint_arrays(arr: np.ndarray):
    """``(G, h)`` with ``G a <= h`` for a dense float distance matrix."""
    n = arr.shape[0]
    iu, ju = np.triu_indices(n, 1)
    m = len(iu)
    G = np.zeros((3 * m + n, n))
    h = np.zeros(3 * m + n)
    k = np.arange(m)
    G[3 * k, iu] = 1.0
    G[3 * k, ju] = -1.0
    G[3 * k + 1, iu] = -1.0
    G[3 * k + 1, ju] = 1.0
    G[3 * k + 2, iu] = -1.0
    G[3 * k + 2, ju] = -1.0
    rij = arr[iu, ju]
    h[3 * k] = rij
    h[3 * k + 1] = rij
    h[3 * k + 2] = -rij
    G[3 * m + np.arange(n), np.arange(n)] = -1.0
    return G, h


def vertices_float(arr: np.ndarray, cap: int = DEFAULT_VERTEX_CAP) -> np.ndarray:
    """Vertices of ``A(r)`` for a float matrix, as a lexicographically sorted array.

    The doubles are converted to rationals exactly and enumerated with the
    double description method, so no tolerance enters the combinatorics.
    """
    arr = np.asarray(arr, dtype=float)
    n = arr.shape[0]
    if n > cap:
        raise VertexCapExceeded(f"vertex enumeration capped at order {cap}, got {n}")
    exact = DistanceMatrix._trusted(np.vectorize(Fraction, otypes=[object])(arr), RATIONAL)
    verts = _vertices_dd(build(exact))
    return np.array(verts, dtype=float).reshape(len(verts), n) + 0.0


def vertices_float_subsets(arr: np.ndarray, cap: int = FLOAT_VERTEX_CAP) -> np.ndarray:
    """Vertices of ``A(r)`` for a float matrix by batched subset solving."""
    arr = np.asarray(arr, dtype=float)
    n = arr.shape[0]
    if n > cap:
        raise VertexCapExceeded(f"float vertex enumeration capped at order {cap}, got {n}")
    if n == 1:
        return np.zeros((1, 1))
    G, h = float_constraint_arrays(arr)
    idx = _subset_index(G.shape[0], n)
    scale = max(1.0, float(arr.max()))
    tol = 1e-9 * scale
    out = []
    for start in range(0, len(idx), 200_000):
        chunk = idx[start:start + 200_000]
        A = G[chunk]
        b = h[chunk]
        # integer coefficient matrices: nonsingular iff |det| >= 1
        ok = np.abs(np.linalg.det(A)) > 0.5
        if not ok.any():
            continue
        x = np.linalg.solve(A[ok], b[ok][..., None])[..., 0]
        feas = np.all(x @ G.T <= h + tol, axis=1)
        out.append(x[feas])
    pts = np.concatenate(out) if out else np.zeros((0, n))
    key = np.round(pts / tol).astype(np.int64)
    _, first = np.unique(key, axis=0, return_index=True)
    pts = pts[np.sort(first)] + 0.0
    order = np.lexsort(pts.T[::-1])
    return pts[order]


def extremal_points(P: AdmissiblePolytope, cap: int = DEFAULT_VERTEX_CAP, method: str = "dd") -> list[tuple]:
    """All vertices of ``A(r)``, sorted lexicographically.

    ``method`` is ``"dd"`` (double description, default) or ``"subsets"``
    (exhaustive search over constraint subsets; exact but slow beyond order 4).
    Float bases are converted to rationals exactly and enumerated the same way.
    """
    n = P.dim
    if n > cap:
        raise VertexCapExceeded(
            f"order {n} exceeds the vertex enumeration cap {cap}: the number of "
            f"constraint subsets grows combinatorially"
        )
    if not P.base.exact:
        return [tuple(v) for v in vertices_float(P.base.to_array(), cap=cap)]
    if P._vertices is None or method != "dd":
        if method == "dd":
            verts = _vertices_dd(P)
        elif method == "subsets":
            verts = _vertices_subsets(P)
        else:
            raise ValueError(f"unknown method {method!r}")
        if n == 3 and len(verts) != 7:
            logger.info("order-3 base with a degenerate triangle: %d vertices instead of 7", len(verts))
        if method != "dd":
            return verts
        P._vertices = verts
    return list(P._vertices)


def minkowski_decompose(P: AdmissiblePolytope, cap: int = DEFAULT_VERTEX_CAP):
    """``(vertices of the compact part, diagonal ray direction)``."""
    return extremal_points(P, cap=cap), P.ray


def dimensions(P: AdmissiblePolytope, cap: int = DEFAULT_VERTEX_CAP) -> tuple[int, int]:
    """``(dim A(r), dim conv(vertices))`` as affine dimensions."""
    verts = extremal_points(P, cap=cap)
    v0 = verts[0]
    diffs = [tuple(Fraction(x) - Fraction(y) for x, y in zip(v, v0)) for v in verts[1:]]
    dim_m = _rank(diffs) if diffs else 0
    dim_a = _rank(diffs + [tuple(Fraction(1) for _ in v0)])
    return dim_a, dim_m


def recomposed_contains(vertices, x, tol: float = 1e-9) -> bool:
    """Is ``x`` in ``conv(vertices) + diagonal ray``? Decided by a small LP."""
    from scipy.optimize import linprog

    V = np.array([[float(c) for c in v] for v in vertices])
    x = np.array([float(c) for c in x])
    k, n = V.shape
    # variables: k convex weights, one shift; minimise a slack-free feasibility
    A_eq = np.zeros((n + 1, k + 1))
    A_eq[:n, :k] = V.T
    A_eq[:n, k] = 1.0
    A_eq[n, :k] = 1.0
    b_eq = np.concatenate([x, [1.0]])
    res = linprog(np.zeros(k + 1), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * (k + 1), method="highs")
    if res.status == 0:
        return True
    if res.status != 2:
        raise RuntimeError(f"LP failed: {res.message}")
    # infeasible; accept only if within tol of the set (boundary points)
    A_eq2 = np.hstack([A_eq, np.eye(n + 1), -np.eye(n + 1)])
    c = np.concatenate([np.zeros(k + 1), np.ones(2 * (n + 1))])
    res2 = linprog(c, A_eq=A_eq2, b_eq=b_eq, bounds=[(0, None)] * (k + 1 + 2 * (n + 1)), method="highs")
    return bool(res2.status == 0 and res2.fun <= tol)


# -- extensions -------------------------------------------------------------

def extension_interval(r: DistanceMatrix, a, b, tol: float = DEFAULT_TOL) -> ExtensionInterval:
    """Feasible distances between the two new points when ``r`` is extended by ``a`` then ``b``."""
    va, vb = _as_vector(r, a), _as_vector(r, b)
    for name, v in (("a", va), ("b", vb)):
        if not _admissible(r, v, tol):
            raise InadmissibleVector(f"{name} is not admissible for the base matrix")
    return _interval(va, vb)


def _interval(va, vb) -> ExtensionInterval:
    lo = max(abs(x - y) for x, y in zip(va, vb))
    hi = min(x + y for x, y in zip(va, vb))
    return ExtensionInterval(lo, hi)


def attach(r: DistanceMatrix, a, tol: float = DEFAULT_TOL) -> DistanceMatrix:
    """``r^a``: the order ``n+1`` matrix with ``a`` as its last row and column."""
    va = _as_vector(r, a)
    if not _admissible(r, va, tol):
        raise InadmissibleVector("vector is not admissible for the base matrix")
    return _attach_unchecked(r, va)


def _attach_unchecked(r: DistanceMatrix, va: np.ndarray) -> DistanceMatrix:
    n = r.order
    arr = r.to_array()
    if r.exact:
        out = np.empty((n + 1, n + 1), dtype=object)
        out[:n, :n] = arr
        out[n, :n] = va
        out[:n, n] = va
        out[n, n] = Fraction(0)
    else:
        out = np.zeros((n + 1, n + 1))
        out[:n, :n] = arr
        v = np.maximum(va, 0.0)
        out[n, :n] = v
        out[:n, n] = v
    return DistanceMatrix._trusted(out, r.domain)


def _pick(iv: ExtensionInterval, rule: str, exact: bool):
    lo, hi = iv.lower, iv.upper
    if lo > hi:
        if not exact and lo - hi <= CLAMP_TOL:
            logger.warning("empty extension interval by %.3g clamped to its midpoint", lo - hi)
            return (lo + hi) / 2
        raise AssertionError(f"empty extension interval [{lo}, {hi}]")
    if rule == "midpoint":
        return (lo + hi) / 2
    if rule == "lower":
        return lo
    if rule == "upper":
        return hi
    raise ValueError(f"unknown rule {rule!r}")


def extend_prefix(r_big: DistanceMatrix, a, rule: str = "midpoint", tol: float = DEFAULT_TOL) -> AdmissibleVector:
    """Extend ``a`` in ``A(p_n(r_big))`` to a vector admissible for all of ``r_big``.

    Coordinates are appended one at a time; each new coordinate is chosen in
    the interval ``[max_i |c_i - b_i|, min_i (c_i + b_i)]`` where ``c`` is the
    next column of ``r_big``.
    """
    N = r_big.order
    n = len(a)
    if not 1 <= n <= N:
        raise ValueError(f"prefix length {n} outside 1..{N}")
    corner = nw_corner(r_big, n)
    vb = _as_vector(corner, a)
    if not _admissible(corner, vb, tol):
        raise InadmissibleVector("prefix is not admissible for the NW-corner")
    coords = _extend_prefix_array(r_big, vb, rule)
    return AdmissibleVector(N, tuple(coords.tolist()))


def _extend_prefix_array(r_big: DistanceMatrix, vb: np.ndarray, rule: str = "midpoint") -> np.ndarray:
    N, n = r_big.order, len(vb)
    out = np.empty(N, dtype=vb.dtype)
    out[:n] = vb
    exact = r_big.exact
    for k in range(n, N):
        col = r_big._col(k, np.arange(k))
        prev = out[:k]
        if exact:
            iv = _interval(col, prev)
        else:
            iv = ExtensionInterval(float(np.max(np.abs(col - prev))), float(np.min(col + prev)))
        out[k] = _pick(iv, rule, exact)
    return out
