"""Finite-truncation diagnostics of universality.

A matrix is universal when, for every ``n``, its columns past ``n`` restricted
to the first ``n`` rows are dense in the admissible set of the NW-corner.
On a finite matrix that becomes a number: the worst sup-distance from a probe
target to its best column. Weak universality asks instead that every finite
distance matrix be approximated by some principal submatrix.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .cone import DEFAULT_TOL, DistanceMatrix, DomainError, nw_corner
from .polytope import VertexCapExceeded, vertices_float
from .rng import stream
from .sampler import parametrize

PROBE_VERTEX_CAP = 5
EXHAUSTIVE_MAX_ORDER = 40
EXHAUSTIVE_MAX_NEW = 3
WEAK_CAP = 6


@dataclass
class DefectReport:
    n: int
    epsilon_achieved: float
    witness_targets: list = field(default_factory=list)
    samples_used: int = 0
    seed: int | None = None

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "epsilon_achieved": self.epsilon_achieved,
            "samples_used": self.samples_used,
            "seed": self.seed,
            "witness_targets": self.witness_targets,
        }


def probe_targets(corner: np.ndarray, probes: int, seed: int) -> np.ndarray:
    """Seeded probe points of ``A(corner)``.

    Each probe is a Dirichlet mixture of the vertices (or, above the vertex
    cap, a uniform point of the interval parametrization) plus a diagonal
    shift that is 0 with probability 1/4 and otherwise uniform on
    ``[0, max(1, diameter)]``.
    """
    n = corner.shape[0]
    rng = stream(seed, 0)
    shift_max = max(1.0, float(corner.max()) if n > 1 else 0.0)
    try:
        V = vertices_float(corner, cap=PROBE_VERTEX_CAP)
    except VertexCapExceeded:
        V = None
    out = np.empty((probes, n))
    for p in range(probes):
        if V is not None:
            base = rng.dirichlet(np.ones(len(V))) @ V
        else:
            u = rng.random(n)
            u[0] = 0.0
            base = parametrize(corner, u)
        lam = 0.0 if rng.random() < 0.25 else rng.uniform(0.0, shift_max)
        out[p] = base + lam
    return out


def _column_block(r: DistanceMatrix, n: int) -> np.ndarray:
    """Rows ``1..n`` of columns ``n+1..N`` as an ``(N - n, n)`` float array."""
    arr = r.to_array()
    return np.asarray(arr[n:, :n], dtype=float)


def universality_defect(r: DistanceMatrix, n: int, probes: int = 200, seed: int = 0,
                        targets=None) -> DefectReport:
    """Worst case over probe targets of the best column's sup-distance.

    ``targets`` (an array of shape ``(p, n)``) replaces the seeded probes.
    """
    N = r.order
    if not 1 <= n < N:
        raise DomainError(f"need 1 <= n < order ({N}); no columns beyond n")
    corner = nw_corner(r, n)
    if not corner.is_proper:
        raise DomainError("NW-corner is degenerate (not proper)")
    if targets is None:
        if probes < 1:
            raise ValueError("probes must be positive")
        T = probe_targets(np.asarray(corner.to_array(), dtype=float), probes, seed)
    else:
        T = np.atleast_2d(np.asarray(targets, dtype=float))
        if T.shape[1] != n:
            raise ValueError(f"targets must have length {n}")
    cols = _column_block(r, n)
    best = np.empty(len(T))
    where = np.empty(len(T), dtype=int)
    chunk = max(1, 2_000_000 // max(1, cols.size))
    for s in range(0, len(T), chunk):
        t = T[s:s + chunk]
        d = np.abs(cols[None, :, :] - t[:, None, :]).max(axis=2)
        where[s:s + chunk] = d.argmin(axis=1)
        best[s:s + chunk] = d[np.arange(len(t)), where[s:s + chunk]]
    witnesses = [
        {"target": t.tolist(), "column": int(n + 1 + w), "distance": float(b)}
        for t, w, b in zip(T, where, best)
    ]
    return DefectReport(n, float(best.max()), witnesses, len(T), seed if targets is None else None)


# -- epsilon-extension of isometries ----------------------------------------

def _verify(R: np.ndarray, Q: np.ndarray, idx: list[int]) -> float:
    sub = R[np.ix_(idx, idx)]
    return float(np.max(np.abs(sub - Q))) if len(idx) > 1 else 0.0


def epsilon_extend_isometry(r: DistanceMatrix, q: DistanceMatrix, n: int, epsilon: float,
                            exhaustive: bool = False):
    """Indices ``i_{n+1}, ..., i_K`` (1-based) extending the identity on the first ``n`` points.

    Greedy: each new point of ``q`` is matched to the unused index of ``r``
    whose column is closest in sup-norm to the required one, lowest index on
    ties. Returns ``None`` when no error below ``epsilon`` is reached. The
    returned certificate is re-checked against the full bound.
    ``exhaustive=True`` searches all index choices instead (small sizes only).
    """
    K, N = q.order, r.order
    if not 1 <= n < K:
        raise ValueError(f"need 1 <= n < K ({K})")
    if n > N:
        raise ValueError("corner larger than r")
    R = np.asarray(r.to_array(), dtype=float)
    Q = np.asarray(q.to_array(), dtype=float)
    corner_err = _verify(R, Q[:n, :n], list(range(n)))
    if r.exact and q.exact:
        if not nw_corner(r, n) == nw_corner(q, n):
            raise DomainError("NW-corners of r and q differ")
    elif corner_err > epsilon / 2:
        raise DomainError(f"NW-corners differ by {corner_err:.3g} > epsilon/2")
    if exhaustive:
        if K - n > EXHAUSTIVE_MAX_NEW or N > EXHAUSTIVE_MAX_ORDER:
            raise ValueError("exhaustive search limited to K-n <= 3 and N <= 40")
        found = _exhaustive_extend(R, Q, n, epsilon)
        return None if found is None else [i + 1 for i in found[n:]]
    chosen = list(range(n))
    used = np.zeros(N, dtype=bool)
    used[:n] = True
    for k in range(n, K):
        err = np.abs(R[:, chosen] - Q[None, :k, k]).max(axis=1)
        err[used] = np.inf
        j = int(np.argmin(err))
        if not err[j] < epsilon:
            return None
        chosen.append(j)
        used[j] = True
    if not _verify(R, Q, chosen) < epsilon:
        return None
    return [i + 1 for i in chosen[n:]]


def _exhaustive_extend(R, Q, n, epsilon):
    N, K = R.shape[0], Q.shape[0]

    def rec(chosen):
        k = len(chosen)
        if k == K:
            return list(chosen)
        err = np.abs(R[:, chosen] - Q[None, :k, k]).max(axis=1)
        for j in np.flatnonzero(err < epsilon):
            if j in chosen:
                continue
            got = rec(chosen + [int(j)])
            if got is not None:
                return got
        return None

    got = rec(list(range(n)))
    if got is not None and _verify(R, Q, got) < epsilon:
        return got
    return None


# -- weak universality ------------------------------------------------------

@dataclass
class WeakMatch:
    error: float
    indices: list

    def __iter__(self):
        return iter((self.error, self.indices))

    def as_dict(self) -> dict:
        return {"error": self.error, "indices": self.indices}


def weak_universality_defect(r: DistanceMatrix, q: DistanceMatrix, epsilon: float | None = None,
                             exhaustive: bool = False) -> WeakMatch:
    """Best principal submatrix of ``r`` approximating ``q`` entrywise.

    Greedy from every starting index: the ``k``-th point is the unused index
    minimizing its sup-distance to the required column. The best run over
    start indices wins; with ``epsilon`` given the search stops at the first
    start reaching an error below it. ``exhaustive=True`` checks every
    injective index tuple (small ``r`` only).
    """
    n, N = q.order, r.order
    if n > WEAK_CAP:
        raise ValueError(f"target order above the cap {WEAK_CAP}")
    if n > N:
        raise ValueError("target larger than r")
    R = np.asarray(r.to_array(), dtype=float)
    Q = np.asarray(q.to_array(), dtype=float)
    if n == 1:
        return WeakMatch(0.0, [1])
    if exhaustive:
        if N > EXHAUSTIVE_MAX_ORDER:
            raise ValueError(f"exhaustive search limited to order {EXHAUSTIVE_MAX_ORDER}")
        return _exhaustive_weak(R, Q)
    best_err, best_idx = np.inf, None
    block = max(1, 4_000_000 // N)
    for s in range(0, N, block):
        starts = np.arange(s, min(N, s + block))
        S = len(starts)
        chosen = np.empty((S, n), dtype=int)
        chosen[:, 0] = starts
        worst = np.zeros(S)
        used = np.zeros((S, N), dtype=bool)
        used[np.arange(S), starts] = True
        for k in range(1, n):
            err = np.zeros((S, N))
            for t in range(k):
                np.maximum(err, np.abs(R[chosen[:, t]] - Q[t, k]), out=err)
            err[used] = np.inf
            j = err.argmin(axis=1)
            chosen[:, k] = j
            used[np.arange(S), j] = True
            worst = np.maximum(worst, err[np.arange(S), j])
        w = int(np.argmin(worst))
        if worst[w] < best_err:
            best_err, best_idx = float(worst[w]), chosen[w]
            if epsilon is not None and best_err < epsilon:
                break
    return WeakMatch(best_err, [int(i) + 1 for i in best_idx])


def _exhaustive_weak(R, Q) -> WeakMatch:
    N, n = R.shape[0], Q.shape[0]
    best = [np.inf, None]

    def rec(chosen, worst):
        k = len(chosen)
        if worst >= best[0]:
            return
        if k == n:
            best[0], best[1] = worst, list(chosen)
            return
        if k == 0:
            err = np.zeros(N)
        else:
            err = np.abs(R[:, chosen] - Q[None, :k, k]).max(axis=1)
        for j in np.argsort(err, kind="stable"):
            if j in chosen:
                continue
            rec(chosen + [int(j)], max(worst, float(err[j])))

    rec([], 0.0)
    return WeakMatch(float(best[0]), [i + 1 for i in best[1]])
