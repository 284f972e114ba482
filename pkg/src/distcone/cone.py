"""Finite distance matrices and the elementary operations on the cone.

A :class:`DistanceMatrix` is an immutable symmetric matrix with zero diagonal
that satisfies every triangle inequality. Entries live in one of two
arithmetic domains: ``"rational"`` (exact :class:`fractions.Fraction`) or
``"float"`` (IEEE doubles, triangle checks with an absolute slack tolerance).

Indices are 1-based in every user-facing argument and report. Internally the
matrix is a 0-based numpy array, optionally viewed through an index map so
that corners, shifts, permutations and sampled submatrices do not copy data.
"""
from __future__ import annotations

import numbers
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

RATIONAL = "rational"
FLOAT = "float"
DOMAINS = (RATIONAL, FLOAT)

DEFAULT_TOL = 1e-12


class StructureError(ValueError):
    """Input is not a square symmetric array with zero diagonal."""


class MetricViolation(ValueError):
    """Input is structurally fine but breaks nonnegativity or a triangle inequality."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        first = report.violations[0]
        super().__init__(
            f"{len(report.violations)} metric violation(s); first: {first.kind} "
            f"at {first.witness} with slack {first.slack}"
        )


class DomainError(ValueError):
    """Rational and float matrices were mixed in one operation."""


@dataclass(frozen=True)
class Violation:
    kind: str  # "negative_entry" | "triangle"
    witness: tuple  # (i, j, k) 1-based; k is None for negative entries
    slack: object

    def as_dict(self) -> dict:
        return {"kind": self.kind, "witness": list(self.witness), "slack": _num_out(self.slack)}


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()
    # triangle slacks in [-tol, 0): accepted, but flagged
    near_violations: tuple = ()
    domain: str = FLOAT

    @property
    def valid(self) -> bool:
        return not self.violations

    @property
    def warning(self) -> bool:
        return bool(self.near_violations)

    def as_dict(self) -> dict:
        return {
            "valid": self.valid,
            "domain": self.domain,
            "violations": [v.as_dict() for v in self.violations],
            "near_violations": [v.as_dict() for v in self.near_violations],
        }


def _num_out(x):
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else x.numerator
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    return x


def to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, (bool, np.bool_)):
        raise TypeError("booleans are not distances")
    if isinstance(x, numbers.Integral):
        return Fraction(int(x))
    if isinstance(x, numbers.Real):
        # exact binary value of the double
        return Fraction(float(x))
    raise TypeError(f"cannot interpret {x!r} as a rational number")


def _infer_domain(values: Iterable) -> str:
    for x in values:
        if isinstance(x, (float, np.floating)):
            return FLOAT
    return RATIONAL


def coerce_square(entries, domain: str | None = None) -> tuple[np.ndarray, str]:
    """Return ``(array, domain)`` for a raw square input; no metric checks."""
    if isinstance(entries, DistanceMatrix):
        return entries.to_array(), entries.domain
    if isinstance(entries, np.ndarray) and entries.dtype != object:
        arr = entries
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise StructureError(f"expected a square 2-d array, got shape {arr.shape}")
        if domain is None:
            domain = RATIONAL if np.issubdtype(arr.dtype, np.integer) else FLOAT
    else:
        rows = [list(row) for row in entries]
        n = len(rows)
        for i, row in enumerate(rows):
            if len(row) != n:
                raise StructureError(f"row {i + 1} has {len(row)} entries, expected {n}")
        if domain is None:
            domain = _infer_domain(x for row in rows for x in row)
        arr = np.empty((n, n), dtype=object)
        for i, row in enumerate(rows):
            for j, x in enumerate(row):
                arr[i, j] = x
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}")
    n = arr.shape[0]
    if n == 0:
        raise StructureError("order must be at least 1")
    if domain == RATIONAL:
        out = np.empty((n, n), dtype=object)
        for i in range(n):
            for j in range(n):
                out[i, j] = to_fraction(arr[i, j])
    else:
        try:
            out = np.array(arr, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise StructureError(f"non-numeric entry: {exc}") from None
        if not np.all(np.isfinite(out)):
            raise StructureError("entries must be finite")
    return out, domain


def _check_structure(arr: np.ndarray, domain: str, tol: float) -> None:
    n = arr.shape[0]
    if domain == RATIONAL:
        for i in range(n):
            if arr[i, i] != 0:
                raise StructureError(f"nonzero diagonal entry at ({i + 1},{i + 1})")
            for j in range(i + 1, n):
                if arr[i, j] != arr[j, i]:
                    raise StructureError(f"asymmetric entries at ({i + 1},{j + 1})")
    else:
        d = np.abs(np.diag(arr))
        if np.any(d > tol):
            i = int(np.argmax(d))
            raise StructureError(f"nonzero diagonal entry at ({i + 1},{i + 1})")
        asym = np.abs(arr - arr.T)
        if np.any(asym > tol):
            i, j = np.unravel_index(int(np.argmax(asym)), asym.shape)
            i, j = sorted((int(i), int(j)))
            raise StructureError(f"asymmetric entries at ({i + 1},{j + 1}) beyond tolerance {tol}")


def _metric_violations(arr: np.ndarray, domain: str, tol: float):
    n = arr.shape[0]
    bad, near = [], []
    iu, ju = np.triu_indices(n, 1)
    if domain == RATIONAL:
        for i, j in zip(iu, ju):
            if arr[i, j] < 0:
                bad.append(Violation("negative_entry", (int(i) + 1, int(j) + 1, None), arr[i, j]))
        for i, j in zip(iu, ju):
            rij = arr[i, j]
            for k in range(n):
                if k == i or k == j:
                    continue
                slack = arr[i, k] + arr[k, j] - rij
                if slack < 0:
                    bad.append(Violation("triangle", (int(i) + 1, int(j) + 1, k + 1), slack))
        return bad, near
    neg = arr[iu, ju] < 0
    for i, j in zip(iu[neg], ju[neg]):
        bad.append(Violation("negative_entry", (int(i) + 1, int(j) + 1, None), float(arr[i, j])))
    upper = np.zeros((n, n), dtype=bool)
    upper[iu, ju] = True
    for k in range(n):
        slack = arr[:, k, None] + arr[None, k, :] - arr
        mask = upper & (slack < 0)
        mask[k, :] = False
        mask[:, k] = False
        if not mask.any():
            continue
        for i, j in zip(*np.nonzero(mask)):
            s = float(slack[i, j])
            v = Violation("triangle", (int(i) + 1, int(j) + 1, k + 1), s)
            (bad if s < -tol else near).append(v)
    bad.sort(key=lambda v: (v.kind != "negative_entry", v.witness[:2], v.witness[2] or 0))
    near.sort(key=lambda v: v.witness)
    return bad, near


def validate(entries, domain: str | None = None, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Check a raw square array against the cone's defining inequalities.

    Structural defects (non-square, asymmetric, nonzero diagonal) raise
    :class:`StructureError`; metric defects are listed in the report with
    1-based witnesses ``(i, j, k)`` and slack ``r_ik + r_kj - r_ij``.
    """
    arr, domain = coerce_square(entries, domain)
    _check_structure(arr, domain, tol)
    bad, near = _metric_violations(arr, domain, tol)
    return ValidationReport(tuple(bad), tuple(near), domain)


class DistanceMatrix:
    """Immutable finite (semi-)metric on ``{1..n}``.

    Construct from any square array; the input is validated exhaustively and
    :class:`MetricViolation` is raised if it is not in the cone. Use
    :meth:`from_upper` for the column-within-row upper-triangle layout and
    :meth:`from_points` for matrices of points in a genuine metric space.
    """

    __slots__ = ("_base", "_idx", "_domain")

    def __init__(self, entries, domain: str | None = None, tol: float = DEFAULT_TOL):
        arr, domain = coerce_square(entries, domain)
        _check_structure(arr, domain, tol)
        bad, _ = _metric_violations(arr, domain, tol)
        if bad:
            raise MetricViolation(ValidationReport(tuple(bad), (), domain))
        if domain == FLOAT:
            arr = 0.5 * (arr + arr.T)
            np.fill_diagonal(arr, 0.0)
        self._set(arr, None, domain)

    def _set(self, base, idx, domain):
        base.setflags(write=False)
        self._base = base
        self._idx = idx
        self._domain = domain

    @classmethod
    def _trusted(cls, base: np.ndarray, domain: str, idx: np.ndarray | None = None) -> "DistanceMatrix":
        # caller guarantees membership in the cone (submatrix of a valid
        # metric, or an extension by a checked admissible vector)
        obj = cls.__new__(cls)
        obj._set(base, idx, domain)
        return obj

    @classmethod
    def from_upper(cls, order: int, upper: Sequence, domain: str | None = None, tol: float = DEFAULT_TOL):
        """Build from ``[r_12, r_13, r_23, r_14, r_24, r_34, ...]``."""
        order = int(order)
        if order < 1:
            raise StructureError("order must be at least 1")
        expected = order * (order - 1) // 2
        upper = list(upper)
        if len(upper) != expected:
            raise StructureError(f"order {order} needs {expected} upper entries, got {len(upper)}")
        if domain is None:
            domain = _infer_domain(upper)
        zero = Fraction(0) if domain == RATIONAL else 0.0
        rows = [[zero] * order for _ in range(order)]
        pos = 0
        for j in range(1, order):
            for i in range(j):
                rows[i][j] = rows[j][i] = upper[pos]
                pos += 1
        return cls(rows, domain=domain, tol=tol)

    @classmethod
    def from_points(cls, points, metric: str = "euclidean") -> "DistanceMatrix":
        """Float matrix of pairwise distances of points under a scipy metric."""
        from scipy.spatial.distance import cdist

        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        d = cdist(pts, pts, metric=metric)
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
        return cls._trusted(d, FLOAT)

    @classmethod
    def zero(cls, order: int, domain: str = RATIONAL) -> "DistanceMatrix":
        if domain == RATIONAL:
            base = np.empty((order, order), dtype=object)
            base.fill(Fraction(0))
        else:
            base = np.zeros((order, order))
        return cls._trusted(base, domain)

    # -- accessors ---------------------------------------------------------
    @property
    def order(self) -> int:
        return self._base.shape[0] if self._idx is None else len(self._idx)

    @property
    def domain(self) -> str:
        return self._domain

    @property
    def exact(self) -> bool:
        return self._domain == RATIONAL

    def to_array(self) -> np.ndarray:
        """Dense 0-based array (read-only)."""
        if self._idx is None:
            return self._base
        out = self._base[np.ix_(self._idx, self._idx)]
        out.setflags(write=False)
        return out

    def to_float(self) -> "DistanceMatrix":
        if self._domain == FLOAT:
            return self
        arr = np.array(self.to_array(), dtype=np.float64)
        return DistanceMatrix._trusted(arr, FLOAT)

    def entry(self, i: int, j: int):
        """``r_{i,j}`` with 1-based indices."""
        return self._at(i - 1, j - 1)

    def _at(self, i: int, j: int):
        if self._idx is not None:
            i, j = self._idx[i], self._idx[j]
        return self._base[i, j]

    def _col(self, j: int, rows=None) -> np.ndarray:
        """0-based column ``j`` restricted to 0-based ``rows`` (default all)."""
        if self._idx is None:
            if rows is None:
                return self._base[:, j]
            return self._base[rows, j]
        jj = self._idx[j]
        ii = self._idx if rows is None else self._idx[rows]
        return self._base[ii, jj]

    def _take(self, idx0) -> "DistanceMatrix":
        idx0 = np.asarray(idx0, dtype=np.intp)
        composed = idx0 if self._idx is None else self._idx[idx0]
        return DistanceMatrix._trusted(self._base, self._domain, composed)

    def submatrix(self, indices: Sequence[int]) -> "DistanceMatrix":
        """Matrix of the points ``indices`` (1-based; repeats allowed)."""
        idx = np.asarray(indices, dtype=np.intp) - 1
        if idx.size == 0 or idx.min() < 0 or idx.max() >= self.order:
            raise IndexError("submatrix indices out of range")
        return self._take(idx)

    def upper(self) -> list:
        """Upper triangle in the order ``r_12, r_13, r_23, r_14, ...``."""
        arr = self.to_array()
        n = self.order
        return [arr[i, j] for j in range(1, n) for i in range(j)]

    def column(self, j: int) -> np.ndarray:
        """Distances ``(r_{1,j}, ..., r_{j-1,j})`` from point ``j`` to its predecessors."""
        return np.array(self._col(j - 1, np.arange(j - 1)))

    @property
    def is_proper(self) -> bool:
        arr = self.to_array()
        n = self.order
        off = arr[~np.eye(n, dtype=bool)]
        return bool(np.all(off > 0)) if off.size else True

    @property
    def diameter(self):
        arr = self.to_array()
        if self.order == 1:
            return Fraction(0) if self.exact else 0.0
        return arr.max()

    def __eq__(self, other):
        if not isinstance(other, DistanceMatrix):
            return NotImplemented
        if self._domain != other._domain or self.order != other.order:
            return False
        a, b = self.to_array(), other.to_array()
        return bool(np.all(a == b))

    __hash__ = None

    def __repr__(self):
        n = self.order
        head = ", ".join(str(_num_out(x)) for x in self.upper()[:6])
        more = ", ..." if n * (n - 1) // 2 > 6 else ""
        return f"DistanceMatrix(order={n}, domain={self._domain}, upper=[{head}{more}])"


def require_same_domain(*objs) -> str:
    domains = {o.domain for o in objs}
    if len(domains) > 1:
        raise DomainError(f"mixed arithmetic domains: {sorted(domains)}")
    return domains.pop()


def nw_corner(r: DistanceMatrix, n: int) -> DistanceMatrix:
    """Leading ``n x n`` submatrix."""
    if not 1 <= n <= r.order:
        raise ValueError(f"corner size {n} outside 1..{r.order}")
    if n == r.order:
        return r
    return r._take(np.arange(n))


def nw_shift(r: DistanceMatrix) -> DistanceMatrix:
    """Delete the first row and column: ``(NW r)_{i,j} = r_{i+1,j+1}``."""
    if r.order < 2:
        raise ValueError("NW-shift needs order at least 2")
    return r._take(np.arange(1, r.order))


def check_permutation(g: Sequence[int], n: int) -> np.ndarray:
    g = np.asarray(list(g), dtype=np.intp)
    if g.shape != (n,) or sorted(g.tolist()) != list(range(1, n + 1)):
        raise ValueError(f"not a permutation of 1..{n}: {g.tolist()}")
    return g - 1


def permute(r: DistanceMatrix, g: Sequence[int]) -> DistanceMatrix:
    """Relabel points: ``r'_{i,j} = r_{g(i), g(j)}``; ``g`` lists images of 1..n."""
    return r._take(check_permutation(g, r.order))


def compose(g: Sequence[int], h: Sequence[int]) -> list[int]:
    """``g`` first, then ``h``: ``(g o h)(i) = h(g(i))`` for 1-based image lists.

    With ``permute`` relabeling by ``r_{g(i), g(j)}`` this order makes
    ``permute(r, compose(g, h)) == permute(permute(r, h), g)``.
    """
    return [h[x - 1] for x in g]


def inverse(g: Sequence[int]) -> list[int]:
    out = [0] * len(g)
    for i, x in enumerate(g, start=1):
        out[x - 1] = i
    return out
