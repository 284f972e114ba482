"""Matrix distributions of finite metric-measure spaces.

A metric triple ``T = (X, rho, mu)`` is sampled by drawing points i.i.d. from
``mu`` (with repetition) and recording their distance matrix. The law of the
``k x k`` sampled matrices, binned on a fixed grid, is the fingerprint used to
compare two triples. Coverage statistics separate genuine matrix
distributions from invariant measures that merely look like one.
"""
from __future__ import annotations

import itertools
import logging
import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .cone import FLOAT, RATIONAL, DistanceMatrix, DomainError, permute, to_fraction
from .rng import GENERATOR_ID, stream

logger = logging.getLogger(__name__)

DEFAULT_K = 3
DEFAULT_BINS = 64
DEFAULT_SAMPLES = 10_000
DEFAULT_ALPHA = 0.01
CHUNK = 2048
DENSE_EVENT_LIMIT = 2_000_000
WEIGHT_TOL = 1e-12


def default_threads() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


# -- metric triples ----------------------------------------------------------

@dataclass(frozen=True)
class MetricTriple:
    points: tuple
    metric: DistanceMatrix
    weights: np.ndarray

    def __init__(self, points, metric: DistanceMatrix, weights):
        n = metric.order
        points = tuple(points) if points is not None else tuple(range(1, n + 1))
        if len(points) != n:
            raise DomainError(f"{len(points)} point labels for a metric of order {n}")
        if not metric.is_proper:
            raise DomainError("metric of a triple must be proper")
        if len(weights) != n:
            raise DomainError(f"{len(weights)} weights for {n} points")
        if metric.exact and all(not isinstance(w, float) for w in weights):
            exact = [to_fraction(w) for w in weights]
            if any(w <= 0 for w in exact) or sum(exact) != 1:
                raise DomainError("weights must be positive and sum to 1 exactly")
            w = np.array([float(x) for x in exact])
        else:
            w = np.asarray(weights, dtype=float)
            if np.any(w <= 0) or abs(w.sum() - 1) > WEIGHT_TOL:
                raise DomainError("weights must be positive and sum to 1")
        w.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "metric", metric)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.metric.order

    def relabel(self, g: Sequence[int]) -> "MetricTriple":
        """The isometric triple with point ``i`` renamed ``g^{-1}(i)``."""
        g0 = np.asarray(g) - 1
        return MetricTriple([self.points[i] for i in g0], permute(self.metric, g), self.weights[g0])

    def as_dict(self) -> dict:
        from .formats import num_to_json
        return {
            "points": list(self.points),
            "metric_upper": [num_to_json(x) for x in self.metric.upper()],
            "weights": [float(w) for w in self.weights],
        }


def uniform_triple(metric: DistanceMatrix) -> MetricTriple:
    n = metric.order
    if metric.exact:
        return MetricTriple(None, metric, [Fraction(1, n)] * n)
    return MetricTriple(None, metric, np.full(n, 1.0 / n))


# -- sampling ------------------------------------------------------------------

def _draw_indices(weights: np.ndarray, rng: np.random.Generator, shape) -> np.ndarray:
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(shape), side="right")


def sample_matrix(T: MetricTriple, k: int, seed: int) -> DistanceMatrix:
    """Distance matrix of ``k`` i.i.d. ``mu``-points; repeated points give zeros."""
    if k < 1:
        raise ValueError("k must be positive")
    idx = _draw_indices(T.weights, stream(seed, 0), k)
    return T.metric._take(idx)


def uniform_edges(hi: float, bins: int = DEFAULT_BINS, lo: float = 0.0) -> np.ndarray:
    if not hi > lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, bins + 1)


def _bin(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Bin index of each value; the last bin is closed; ``len(edges) - 1`` is overflow."""
    b = np.searchsorted(edges, values, side="right") - 1
    nb = len(edges) - 1
    b[values == edges[-1]] = nb - 1
    b[values > edges[-1]] = nb
    b[values < edges[0]] = nb
    return b


@dataclass
class Fingerprint:
    """Sparse histogram of binned upper-triangle tuples of sampled ``k x k`` matrices."""

    k: int
    num_samples: int
    bin_edges: np.ndarray
    counts: dict
    seed: int | None = None
    generator: str = GENERATOR_ID
    overflow: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def positions(self) -> int:
        return self.k * (self.k - 1) // 2

    @property
    def bins(self) -> int:
        return len(self.bin_edges) - 1

    def frequencies(self) -> dict:
        return {key: c / self.num_samples for key, c in self.counts.items()}

    def marginal(self, position: int) -> np.ndarray:
        """Frequencies of the bins (plus overflow) at one upper-triangle position."""
        out = np.zeros(self.bins + 1)
        for key, c in self.counts.items():
            out[key[position]] += c
        return out / self.num_samples

    def coarsen(self, factor: int) -> "Fingerprint":
        """Merge every ``factor`` consecutive bins; the bin count must be divisible."""
        if self.bins % factor:
            raise ValueError("factor must divide the number of bins")
        nb = self.bins // factor
        counts: Counter = Counter()
        for key, c in self.counts.items():
            counts[tuple(nb if b == self.bins else b // factor for b in key)] += c
        return Fingerprint(self.k, self.num_samples, self.bin_edges[::factor].copy(), dict(counts),
                           self.seed, self.generator, self.overflow, dict(self.meta))


def _upper_positions(k: int):
    return np.triu_indices(k, 1)


def fingerprint_from_matrices(entries: np.ndarray, k: int, bin_edges, seed=None, meta=None) -> Fingerprint:
    """Fingerprint of an ``(s, k(k-1)/2)`` array of upper-triangle tuples."""
    edges = np.asarray(bin_edges, dtype=float)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly increasing")
    entries = np.asarray(entries, dtype=float).reshape(len(entries), -1)
    binned = _bin(entries, edges)
    keys, cnt = np.unique(binned, axis=0, return_counts=True)
    counts = {tuple(int(x) for x in key): int(c) for key, c in zip(keys, cnt)}
    overflow = int(np.count_nonzero(np.any(binned == len(edges) - 1, axis=1)))
    if overflow:
        logger.warning("%d samples fall outside the bin grid; counted in the overflow bin", overflow)
    return Fingerprint(k, len(entries), edges, counts, seed, GENERATOR_ID, overflow, dict(meta or {}))


def _sample_chunks(T: MetricTriple, k: int, num_samples: int, seed: int, threads: int,
                   transform: Callable | None = None) -> np.ndarray:
    """Upper-triangle tuples of ``num_samples`` sampled matrices.

    Chunk ``c`` always uses the stream ``(seed, 1, c)``, so the result does
    not depend on the thread count.
    """
    R = np.asarray(T.metric.to_array(), dtype=float)
    iu = _upper_positions(k)
    n_chunks = -(-num_samples // CHUNK)

    def work(c):
        size = min(CHUNK, num_samples - c * CHUNK)
        idx = _draw_indices(T.weights, stream(seed, 1, c), (size, k))
        if transform is not None:
            idx = transform(idx)
        return R[idx[:, :, None], idx[:, None, :]][:, iu[0], iu[1]]

    threads = max(1, int(threads or 1))
    if threads == 1 or n_chunks == 1:
        parts = [work(c) for c in range(n_chunks)]
    else:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(work, range(n_chunks)))
    return np.concatenate(parts) if parts else np.zeros((0, len(iu[0])))


def fingerprint(T: MetricTriple, k: int = DEFAULT_K, num_samples: int = DEFAULT_SAMPLES,
                bin_edges=None, seed: int = 0, threads: int = 1) -> Fingerprint:
    """Binned empirical law of ``k x k`` sampled distance matrices.

    The default grid has 64 uniform bins over ``[0, diameter]``.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if num_samples < 1:
        raise ValueError("num_samples must be positive")
    if bin_edges is None:
        bin_edges = uniform_edges(float(T.metric.diameter))
    entries = _sample_chunks(T, k, num_samples, seed, threads)
    return fingerprint_from_matrices(entries, k, bin_edges, seed)


# -- two-sample comparison ----------------------------------------------------

@dataclass
class Comparison:
    """Outcome of a two-sample comparison.

    ``statistic`` is the largest frequency difference over all events,
    ``score`` the largest ratio of a difference to its own bound, and
    ``threshold`` the bound of the event attaining ``score``.
    """

    statistic: float
    same: bool
    threshold: float
    events: int
    alpha: float
    score: float = 0.0

    def __iter__(self):
        return iter((self.statistic, self.same))

    def as_dict(self) -> dict:
        return {"statistic": self.statistic, "same": self.same, "threshold": self.threshold,
                "score": self.score, "events": self.events, "alpha": self.alpha}


def _dense(f: Fingerprint) -> np.ndarray:
    L = f.bins + 1
    arr = np.zeros((L,) * f.positions)
    for key, c in f.counts.items():
        arr[key] += c
    return arr / f.num_samples


def _events(f: Fingerprint, joint: bool) -> list[np.ndarray]:
    """Probabilities of the comparison events.

    Per-position bin cells, plus orthants ``{x <= t}``: the joint multivariate
    CDF when ``joint``, otherwise one- and two-dimensional marginal CDFs.
    """
    P = f.positions
    out = [f.marginal(p) for p in range(P)]
    if joint:
        c = _dense(f)
        for ax in range(P):
            c = np.cumsum(c, axis=ax)
        out.append(c.ravel())
        return out
    for p in range(P):
        out.append(np.cumsum(f.marginal(p)))
    L = f.bins + 1
    for p, q in itertools.combinations(range(P), 2):
        m = np.zeros((L, L))
        for key, cnt in f.counts.items():
            m[key[p], key[q]] += cnt
        out.append(np.cumsum(np.cumsum(m, 0), 1).ravel() / f.num_samples)
    return out


def threshold(n1: int, n2: int, events: int, alpha: float = DEFAULT_ALPHA, p=0.5):
    """Two-sample Bernstein bound for an event of probability ``p``, union-corrected over ``events``.

    At ``p = 1/2`` the leading term is the Hoeffding bound
    ``sqrt((1/n1 + 1/n2) log(2B/alpha) / 2)``; rare events get tighter bounds.
    ``p`` may be an array.
    """
    L = math.log(2 * max(events, 1) / alpha)
    v = np.asarray(p) * (1 - np.asarray(p)) * (1 / n1 + 1 / n2)
    m = max(1 / n1, 1 / n2) * L / 3
    return m + np.sqrt(m * m + 2 * v * L)


def compare(f1: Fingerprint, f2: Fingerprint, alpha: float = DEFAULT_ALPHA) -> Comparison:
    """Two-sample test of equal laws over cell and orthant events.

    Each event's difference is held against a Bernstein bound evaluated at the
    pooled event probability; events trivial under the pooled sample are
    dropped before the union correction. ``same`` holds when no event exceeds
    its bound.
    """
    if f1.k != f2.k:
        raise ValueError(f"fingerprints have different k ({f1.k} vs {f2.k})")
    if f1.bins != f2.bins or not np.array_equal(f1.bin_edges, f2.bin_edges):
        raise ValueError("fingerprints use different bin grids")
    joint = (f1.bins + 1) ** f1.positions <= DENSE_EVENT_LIMIT
    e1 = np.concatenate(_events(f1, joint))
    e2 = np.concatenate(_events(f2, joint))
    n1, n2 = f1.num_samples, f2.num_samples
    pooled = (e1 * n1 + e2 * n2) / (n1 + n2)
    live = (pooled > 1e-12) & (pooled < 1 - 1e-12)
    B = int(np.count_nonzero(live))
    if not B:
        return Comparison(0.0, True, float(threshold(n1, n2, 1, alpha)), 0, alpha)
    diff = np.abs(e1 - e2)[live]
    bounds = threshold(n1, n2, B, alpha, pooled[live])
    ratio = diff / bounds
    w = int(np.argmax(ratio))
    score = float(ratio[w])
    return Comparison(float(diff.max()), score <= 1.0, float(bounds[w]), B, alpha, score)


# -- estimators ----------------------------------------------------------------

def ball_measure_estimate(r: DistanceMatrix, i: int, l: float) -> float:
    """``(1/n) #{k : r_ki <= l}``; the point itself counts (closed ball)."""
    n = r.order
    if not 1 <= i <= n:
        raise IndexError(f"index {i} outside 1..{n}")
    col = np.asarray(r._col(i - 1), dtype=float)
    return float(np.count_nonzero(col <= l)) / n


@dataclass
class EmpiricalDistribution:
    """Submatrices of one matrix along random injections, with equal weights."""

    n: int
    samples: np.ndarray
    weights: np.ndarray

    def as_matrices(self) -> list[DistanceMatrix]:
        out = []
        for row in self.samples:
            out.append(DistanceMatrix.from_upper(self.n, row.tolist(), domain=FLOAT))
        return out

    def fingerprint(self, bin_edges) -> Fingerprint:
        return fingerprint_from_matrices(self.samples, self.n, bin_edges)


def _injections(N: int, n: int, num: int, rng: np.random.Generator) -> np.ndarray:
    if n * 4 <= N:
        # rejection on repeated indices is cheap when n << N
        out = rng.integers(0, N, size=(num, n))
        bad = np.array([len(set(row)) < n for row in out])
        while bad.any():
            out[bad] = rng.integers(0, N, size=(int(bad.sum()), n))
            bad = np.array([len(set(row)) < n for row in out])
        return out
    return np.array([rng.permutation(N)[:n] for _ in range(num)])


def empirical_distribution(r: DistanceMatrix, n: int, num_perm: int, seed: int) -> EmpiricalDistribution:
    """Monte Carlo over uniformly random injections ``{1..n} -> {1..N}``."""
    N = r.order
    if not 1 <= n <= N:
        raise ValueError(f"need 1 <= n <= order ({N})")
    if num_perm < 1:
        raise ValueError("num_perm must be positive")
    idx = _injections(N, n, num_perm, stream(seed, 0))
    iu = _upper_positions(n)
    R = r.to_array()
    samples = np.asarray(R[idx[:, :, None], idx[:, None, :]][:, iu[0], iu[1]], dtype=float)
    return EmpiricalDistribution(n, samples, np.full(num_perm, 1.0 / num_perm))


# -- coverage ------------------------------------------------------------------

@dataclass
class CoverageReport:
    epsilon: float
    N: int
    fraction: float
    all_covered: bool
    classification: str

    def as_dict(self) -> dict:
        return {"epsilon": self.epsilon, "N": self.N, "fraction": self.fraction,
                "all_covered": self.all_covered, "classification": self.classification}


MATRIX_DISTRIBUTION = "consistent with a matrix distribution"
NOT_MATRIX_DISTRIBUTION = "not a matrix distribution"


def _min_to_prefix(r: DistanceMatrix, N: int) -> np.ndarray:
    n = r.order
    if not 1 <= N < n:
        raise ValueError(f"need 1 <= N < order ({n})")
    R = r.to_array()
    return np.asarray(R[:N, N:], dtype=float).min(axis=0)


def coverage_condition(r: DistanceMatrix, epsilon: float, N: int) -> float:
    """Fraction of the points ``j > N`` within ``epsilon`` of one of the first ``N``."""
    return float(np.mean(_min_to_prefix(r, N) < epsilon))


def coverage_report(r: DistanceMatrix, epsilon: float, N: int) -> CoverageReport:
    """Coverage fraction, the all-points (compact) variant, and a verdict.

    The verdict applies the finite form of the criterion: a matrix drawn from
    a matrix distribution should have coverage fraction above ``1 - epsilon``.
    """
    m = _min_to_prefix(r, N)
    frac = float(np.mean(m < epsilon))
    verdict = MATRIX_DISTRIBUTION if frac > 1 - epsilon else NOT_MATRIX_DISTRIBUTION
    return CoverageReport(epsilon, N, frac, bool(np.all(m < epsilon)), verdict)


def all_ones_matrix(n: int) -> DistanceMatrix:
    """The matrix with every off-diagonal entry 1 (distinct points at distance 1)."""
    return DistanceMatrix._trusted(np.ones((n, n)) - np.eye(n), FLOAT)


# -- invariance ------------------------------------------------------------------

@dataclass
class InvarianceReport:
    raw_vs_permuted: Comparison
    raw_vs_shifted: Comparison
    permuted_vs_shifted: Comparison

    @property
    def passed(self) -> bool:
        return self.raw_vs_permuted.same and self.raw_vs_shifted.same and self.permuted_vs_shifted.same

    def as_dict(self) -> dict:
        return {"raw_vs_permuted": self.raw_vs_permuted.as_dict(),
                "raw_vs_shifted": self.raw_vs_shifted.as_dict(),
                "permuted_vs_shifted": self.permuted_vs_shifted.as_dict(),
                "passed": self.passed}


def _sort_by_first(samples: np.ndarray) -> np.ndarray:
    """Adversarial fixture: reorder each sample's points by distance to its first point."""
    out = np.empty_like(samples)
    for s in range(len(samples)):
        m = samples[s]
        order = np.argsort(m[0], kind="stable")
        out[s] = m[np.ix_(order, order)]
    return out


SampleSource = Callable[[int, int, np.random.Generator], np.ndarray]


def triple_source(T: MetricTriple) -> SampleSource:
    """Sampler of full ``(s, k, k)`` matrices drawn from a triple."""
    R = np.asarray(T.metric.to_array(), dtype=float)

    def draw(s, k, rng):
        idx = _draw_indices(T.weights, rng, (s, k))
        return R[idx[:, :, None], idx[:, None, :]]

    return draw


def iid_source(lo: float = 0.5, hi: float = 1.0) -> SampleSource:
    """Symmetric matrices with i.i.d. U(lo, hi) off-diagonal entries."""

    def draw(s, k, rng):
        out = np.zeros((s, k, k))
        iu = _upper_positions(k)
        vals = rng.uniform(lo, hi, size=(s, len(iu[0])))
        out[:, iu[0], iu[1]] = vals
        return out + out.transpose(0, 2, 1)

    return draw


def constant_source(c: float = 1.0) -> SampleSource:
    """Point mass at the matrix with all off-diagonal entries ``c``."""

    def draw(s, k, rng):
        return np.broadcast_to(c * (1 - np.eye(k)), (s, k, k)).copy()

    return draw


def invariance_check(source, k: int = DEFAULT_K, num_samples: int = DEFAULT_SAMPLES, seed: int = 0,
                     bin_edges=None, adversarial: bool = False, alpha: float = DEFAULT_ALPHA) -> InvarianceReport:
    """Compare raw, index-permuted and NW-shifted samples of one sample set.

    ``source`` is a :class:`MetricTriple` or a sampler ``(s, k, rng) -> (s, k, k)``.
    One set of ``(k+1) x (k+1)`` samples is drawn; "raw" is its leading
    ``k x k`` block, "shifted" drops the first row and column, "permuted"
    relabels each raw sample's points by an independent random permutation.
    With ``adversarial=True`` each raw sample is first reordered by distance
    to its first point, which breaks exchangeability.
    """
    draw = triple_source(source) if isinstance(source, MetricTriple) else source
    rng = stream(seed, 2)
    big = draw(num_samples, k + 1, rng)
    raw = big[:, :k, :k]
    shifted = big[:, 1:, 1:]
    if adversarial:
        raw = _sort_by_first(raw)
    perms = np.argsort(rng.random((num_samples, k)), axis=1)
    permuted = raw[np.arange(num_samples)[:, None, None], perms[:, :, None], perms[:, None, :]]
    if bin_edges is None:
        hi = float(max(big.max(), 0.0))
        bin_edges = uniform_edges(hi)
    iu = _upper_positions(k)
    fps = [fingerprint_from_matrices(m[:, iu[0], iu[1]], k, bin_edges, seed) for m in (raw, permuted, shifted)]
    return InvarianceReport(compare(fps[0], fps[1], alpha), compare(fps[0], fps[2], alpha),
                            compare(fps[1], fps[2], alpha))


# -- exact oracles ---------------------------------------------------------------

def exact_marginal(T: MetricTriple, k: int) -> dict:
    """Exact law of the upper-triangle tuple of ``k`` sampled points, by enumeration.

    Keys are tuples of entries (exact rationals for rational metrics), values
    are probabilities.
    """
    n = T.size
    R = T.metric.to_array()
    w = T.weights
    out: dict = {}
    iu = list(zip(*_upper_positions(k)))
    for idx in itertools.product(range(n), repeat=k):
        key = tuple(R[idx[i], idx[j]] for i, j in iu)
        p = float(np.prod(w[list(idx)]))
        out[key] = out.get(key, 0.0) + p
    return out


def marginals_equal(m1: dict, m2: dict, tol: float = 1e-12) -> bool:
    keys = set(m1) | set(m2)
    return all(abs(m1.get(key, 0.0) - m2.get(key, 0.0)) <= tol for key in keys)


def weight_preserving_isometry(T1: MetricTriple, T2: MetricTriple, tol: float = 1e-12):
    """A bijection ``g`` (1-based images) with ``rho2(g i, g j) = rho1(i, j)`` and equal weights, or None."""
    n = T1.size
    if T2.size != n:
        return None
    R1 = np.asarray(T1.metric.to_array(), dtype=float)
    R2 = np.asarray(T2.metric.to_array(), dtype=float)
    w1, w2 = T1.weights, T2.weights
    for g in itertools.permutations(range(n)):
        g = np.array(g)
        if np.all(np.abs(w2[g] - w1) <= tol) and np.all(np.abs(R2[np.ix_(g, g)] - R1) <= tol):
            return [int(x) + 1 for x in g]
    return None
